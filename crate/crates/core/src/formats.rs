//! Text file formats shared by the CLI stages.
//!
//! * pose list: `id tx ty tz qw qx qy qz` per line, `#` comments.
//! * candidate pool: the pose list plus a trailing `parent_id` column.
//! * error file: `pose_id e_t_meters e_r_degrees`.
//! * score table / manifest: `# key = value` provenance lines, then a
//!   comma-separated header and one row per candidate.
//! * eval report: summary header and row, then the per-query table.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! file parses back to bit-identical values.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::candidate_gen::CandidatePose;
use crate::error::{Error, Result};
use crate::pose_math::Pose;
use crate::proxy_eval::{EvalReport, QueryError};
use crate::scoring::{TrainError, ValueScore};

pub const SCORE_HEADER: &str =
    "id,parent_id,f_diff,f_nov,f_gs,f_diff_n,f_nov_n,f_gs_n,value,rank,selected";
pub const SUMMARY_HEADER: &str = "method,seed,K,median_t_cm,median_r_deg";
pub const QUERY_HEADER: &str = "query_id,t_err_m,r_err_deg";

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: format!("cannot read file: {e}"),
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

struct LineCtx<'a> {
    path: &'a str,
    line: usize,
}

impl LineCtx<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn field<T: FromStr>(&self, raw: &str, name: &str) -> Result<T> {
        raw.parse()
            .map_err(|_| self.err(format!("invalid {name} `{raw}`")))
    }

    fn float(&self, raw: &str, name: &str) -> Result<f64> {
        let v: f64 = self.field(raw, name)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(format!("non-finite {name} `{raw}`")))
        }
    }
}

/// Parses a pose list; `with_parent` selects the 9-column pool layout, and
/// `None` accepts either layout.
pub fn parse_pose_lines(
    text: &str,
    path: &str,
    with_parent: Option<bool>,
) -> Result<Vec<(Pose, Option<u64>)>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, l) in data_lines(text) {
        let ctx = LineCtx { path, line };
        let cols: Vec<&str> = l.split_whitespace().collect();
        let has_parent = match (cols.len(), with_parent) {
            (8, None | Some(false)) => false,
            (9, None | Some(true)) => true,
            (n, _) => {
                let want = match with_parent {
                    Some(true) => "9",
                    Some(false) => "8",
                    None => "8 or 9",
                };
                return Err(ctx.err(format!("expected {want} columns, found {n}")));
            }
        };
        let id: u64 = ctx.field(cols[0], "id")?;
        let mut v = [0.0; 7];
        let names = ["tx", "ty", "tz", "qw", "qx", "qy", "qz"];
        for k in 0..7 {
            v[k] = ctx.float(cols[k + 1], names[k])?;
        }
        let q = [v[3], v[4], v[5], v[6]];
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-3 {
            return Err(ctx.err(format!("malformed quaternion: norm {norm} is not 1")));
        }
        let pose = Pose::new(id, [v[0], v[1], v[2]], q).map_err(|e| ctx.err(e.to_string()))?;
        let parent = if has_parent {
            Some(ctx.field(cols[8], "parent_id")?)
        } else {
            None
        };
        if !seen.insert(id) {
            return Err(ctx.err(format!("duplicate id {id}")));
        }
        out.push((pose, parent));
    }
    Ok(out)
}

pub fn parse_poses(text: &str, path: &str) -> Result<Vec<Pose>> {
    Ok(parse_pose_lines(text, path, Some(false))?
        .into_iter()
        .map(|(p, _)| p)
        .collect())
}

pub fn parse_pool(text: &str, path: &str) -> Result<Vec<CandidatePose>> {
    Ok(parse_pose_lines(text, path, Some(true))?
        .into_iter()
        .map(|(pose, parent)| CandidatePose {
            pose,
            parent_id: parent.unwrap_or_default(),
        })
        .collect())
}

pub fn read_poses(path: &Path) -> Result<Vec<Pose>> {
    parse_poses(&read_text(path)?, &path.display().to_string())
}

pub fn read_pool(path: &Path) -> Result<Vec<CandidatePose>> {
    parse_pool(&read_text(path)?, &path.display().to_string())
}

fn pose_fields(p: &Pose) -> String {
    let [w, x, y, z] = p.wxyz();
    format!("{} {} {} {} {} {} {} {}", p.id, p.t.x, p.t.y, p.t.z, w, x, y, z)
}

pub fn write_poses(poses: &[Pose]) -> String {
    let mut s = String::from("# id tx ty tz qw qx qy qz\n");
    for p in poses {
        let _ = writeln!(s, "{}", pose_fields(p));
    }
    s
}

pub fn write_pool(pool: &[CandidatePose]) -> String {
    let mut s = String::from("# id tx ty tz qw qx qy qz parent_id\n");
    for c in pool {
        let _ = writeln!(s, "{} {}", pose_fields(&c.pose), c.parent_id);
    }
    s
}

/// Error file rows; rotation errors are read in degrees and stored in radians.
pub fn parse_errors(text: &str, path: &str) -> Result<Vec<TrainError>> {
    let mut seen = HashSet::new();
    data_lines(text)
        .map(|(line, l)| {
            let ctx = LineCtx { path, line };
            let cols: Vec<&str> = l.split_whitespace().collect();
            if cols.len() != 3 {
                return Err(ctx.err(format!("expected 3 columns, found {}", cols.len())));
            }
            let pose_id: u64 = ctx.field(cols[0], "pose_id")?;
            let e_t = ctx.float(cols[1], "e_t")?;
            let e_r = ctx.float(cols[2], "e_r")?;
            if e_t < 0.0 || e_r < 0.0 {
                return Err(ctx.err("errors must be non-negative"));
            }
            if !seen.insert(pose_id) {
                return Err(ctx.err(format!("duplicate pose_id {pose_id}")));
            }
            Ok(TrainError {
                pose_id,
                e_t,
                e_r: e_r.to_radians(),
            })
        })
        .collect()
}

pub fn write_errors(errors: &[TrainError]) -> String {
    let mut s = String::from("# pose_id e_t_meters e_r_degrees\n");
    for e in errors {
        let _ = writeln!(s, "{} {} {}", e.pose_id, e.e_t, e.e_r.to_degrees());
    }
    s
}

/// Ordered `key = value` provenance entries of a table file.
pub type Provenance = Vec<(String, String)>;

pub fn provenance_get<'a>(prov: &'a Provenance, key: &str) -> Option<&'a str> {
    prov.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

pub fn write_score_table(prov: &Provenance, rows: &[ValueScore]) -> String {
    let mut s = String::new();
    for (k, v) in prov {
        let _ = writeln!(s, "# {k} = {v}");
    }
    let _ = writeln!(s, "{SCORE_HEADER}");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.candidate_id,
            r.parent_id,
            r.f_diff,
            r.f_nov,
            r.f_gs,
            r.f_diff_n,
            r.f_nov_n,
            r.f_gs_n,
            r.value,
            r.rank,
            u8::from(r.selected)
        );
    }
    s
}

/// Parses a score table or manifest.
pub fn parse_score_table(text: &str, path: &str) -> Result<(Provenance, Vec<ValueScore>)> {
    let mut prov = Vec::new();
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let ctx = LineCtx { path, line: i + 1 };
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(c) = l.strip_prefix('#') {
            if let Some((k, v)) = c.split_once('=') {
                prov.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if !header_seen {
            if l != SCORE_HEADER {
                return Err(ctx.err(format!("expected header `{SCORE_HEADER}`")));
            }
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = l.split(',').map(str::trim).collect();
        if cols.len() != 11 {
            return Err(ctx.err(format!("expected 11 columns, found {}", cols.len())));
        }
        let selected = match cols[10] {
            "1" => true,
            "0" => false,
            other => return Err(ctx.err(format!("invalid selected flag `{other}`"))),
        };
        rows.push(ValueScore {
            candidate_id: ctx.field(cols[0], "id")?,
            parent_id: ctx.field(cols[1], "parent_id")?,
            f_diff: ctx.float(cols[2], "f_diff")?,
            f_nov: ctx.float(cols[3], "f_nov")?,
            f_gs: ctx.float(cols[4], "f_gs")?,
            f_diff_n: ctx.float(cols[5], "f_diff_n")?,
            f_nov_n: ctx.float(cols[6], "f_nov_n")?,
            f_gs_n: ctx.float(cols[7], "f_gs_n")?,
            value: ctx.float(cols[8], "value")?,
            rank: ctx.field(cols[9], "rank")?,
            selected,
        });
    }
    if !header_seen {
        return Err(Error::Parse {
            path: path.to_string(),
            line: 0,
            msg: "missing header row".into(),
        });
    }
    Ok((prov, rows))
}

pub fn write_report(report: &EvalReport) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n{}\n{QUERY_HEADER}\n", report.summary_line());
    for q in &report.per_query {
        let _ = writeln!(s, "{},{},{}", q.query_id, q.e_t, q.e_r_deg);
    }
    s
}

pub fn parse_report(text: &str, path: &str) -> Result<EvalReport> {
    let mut lines = data_lines(text);
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| Error::Parse {
            path: path.to_string(),
            line: 0,
            msg: format!("missing {what}"),
        })
    };
    let (line, header) = next("summary header")?;
    if header != SUMMARY_HEADER {
        return Err(LineCtx { path, line }.err("bad summary header"));
    }
    let (line, summary) = next("summary row")?;
    let ctx = LineCtx { path, line };
    let cols: Vec<&str> = summary.split(',').collect();
    if cols.len() != 5 {
        return Err(ctx.err("summary row needs 5 columns"));
    }
    let seed = ctx.field(cols[1], "seed")?;
    let k = ctx.field(cols[2], "K")?;
    let (line, qh) = next("query header")?;
    if qh != QUERY_HEADER {
        return Err(LineCtx { path, line }.err("bad query header"));
    }
    let per_query = lines
        .map(|(line, l)| {
            let ctx = LineCtx { path, line };
            let c: Vec<&str> = l.split(',').collect();
            if c.len() != 3 {
                return Err(ctx.err("query row needs 3 columns"));
            }
            Ok(QueryError {
                query_id: ctx.field(c[0], "query_id")?,
                e_t: ctx.float(c[1], "t_err")?,
                e_r_deg: ctx.float(c[2], "r_err")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_errors(cols[0], seed, k, per_query))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pose_file_with_comments_and_any_order() {
        let text = "# header\n\n5 1 2 3 1 0 0 0\n  2 0.5 0 0 0 0 0 1  \n# trailing\n";
        let poses = parse_poses(text, "t.txt").unwrap();
        assert_eq!(poses.len(), 2);
        assert_eq!(poses[0].id, 5);
        assert_eq!(poses[1].wxyz(), [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn malformed_quaternion_reports_line() {
        let text = "0 0 0 0 1 0 0 0\n1 0 0 0 1 0 0 0\n2 0 0 0 1 1 0 0\n";
        let err = parse_poses(text, "train.txt").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().starts_with("train.txt:3:"));
    }

    #[test]
    fn pose_file_errors() {
        assert!(parse_poses("0 0 0 0 1 0 0\n", "x").is_err());
        assert!(parse_poses("0 0 0 0 1 0 0 0 4\n", "x").is_err());
        assert!(parse_poses("0 0 0 zz 1 0 0 0\n", "x").is_err());
        assert!(parse_poses("0 0 0 0 1 0 0 0\n0 1 0 0 1 0 0 0\n", "x").is_err());
        assert!(parse_pool("0 0 0 0 1 0 0 0\n", "x").is_err());
    }

    #[test]
    fn error_file_converts_degrees() {
        let e = parse_errors("3 0.25 90\n", "e").unwrap();
        assert_eq!(e[0].pose_id, 3);
        assert!((e[0].e_r - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(parse_errors("3 -0.25 90\n", "e").is_err());
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            0u64..1_000_000,
            prop::array::uniform3(-100.0f64..100.0),
            prop::array::uniform4(-1.0f64..1.0),
        )
            .prop_filter_map("non-degenerate", |(id, t, q)| Pose::new(id, t, q).ok())
    }

    proptest! {
        #[test]
        fn pool_round_trip_is_lossless(poses in prop::collection::vec(arb_pose(), 1..20)) {
            let pool: Vec<CandidatePose> = poses
                .iter()
                .enumerate()
                .map(|(i, p)| CandidatePose { pose: p.with_id(i as u64), parent_id: p.id })
                .collect();
            let back = parse_pool(&write_pool(&pool), "p").unwrap();
            prop_assert_eq!(back, pool);
        }

        #[test]
        fn score_table_round_trip_is_lossless(
            vals in prop::collection::vec((0.0f64..10.0, 0.0f64..1.0, 0.0f64..2.0), 1..20)
        ) {
            let rows: Vec<ValueScore> = vals
                .iter()
                .enumerate()
                .map(|(i, (raw, n, v))| ValueScore {
                    candidate_id: i as u64,
                    parent_id: (i / 3) as u64,
                    f_diff: *raw,
                    f_nov: raw * 0.3,
                    f_gs: raw / 7.0,
                    f_diff_n: *n,
                    f_nov_n: 1.0 - n,
                    f_gs_n: n * n,
                    value: *v,
                    rank: i + 1,
                    selected: i % 2 == 0,
                })
                .collect();
            let prov = vec![("seed".to_string(), "7".to_string())];
            let (p, back) = parse_score_table(&write_score_table(&prov, &rows), "s").unwrap();
            prop_assert_eq!(p, prov);
            prop_assert_eq!(back, rows);
        }
    }

    #[test]
    fn report_round_trip() {
        let r = EvalReport::from_errors(
            "random",
            4,
            12,
            vec![
                QueryError { query_id: 0, e_t: 0.125, e_r_deg: 3.5 },
                QueryError { query_id: 1, e_t: 0.3, e_r_deg: 1.0 / 3.0 },
            ],
        );
        let back = parse_report(&write_report(&r), "r").unwrap();
        assert_eq!(back, r);
    }
}
