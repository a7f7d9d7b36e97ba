use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{mean_stderr, ExperimentError, Scorecard};
use crate::numfmt::{format_f64, to_json_string};

pub const CURVES_FILE: &str = "curves.csv";
pub const SCORECARD_FILE: &str = "scorecard.json";
pub const MI_MATRIX_FILE: &str = "mi_matrix.csv";
pub const PARTITION_FILE: &str = "partition.json";

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct PartitionFile<'a> {
    block_of: &'a [usize],
    n_blocks: usize,
    n_states: usize,
}

/// One row per evaluation block: the episode count at the end of the block,
/// and the mean and standard error of the block returns across seeds.
fn curves_csv(card: &Scorecard) -> String {
    let mut out = String::from("episodeBlock,meanReturn,stderr\n");
    let blocks = card.runs.first().map_or(0, |r| r.curve.len());
    for b in 0..blocks {
        let xs: Vec<f64> = card.runs.iter().map(|r| r.curve[b]).collect();
        let (m, se) = mean_stderr(&xs);
        writeln!(out, "{},{},{}", (b + 1) * card.eval_block, format_f64(m), format_f64(se)).unwrap();
    }
    out
}

fn mi_matrix_csv(card: &Scorecard) -> String {
    let mi = &card.scores.mi_matrix;
    let l = mi.first().map_or(0, Vec::len);
    let mut out = String::from("factor");
    for k in 0..l {
        write!(out, ",Z{k}").unwrap();
    }
    out.push('\n');
    for (j, row) in mi.iter().enumerate() {
        write!(out, "S{j}").unwrap();
        for v in row {
            write!(out, ",{}", format_f64(*v)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes the four report files into `dir`, creating it if needed, and
/// returns their paths.
pub fn emit_report(card: &Scorecard, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let partition = PartitionFile {
        block_of: card.partition.block_of(),
        n_blocks: card.partition.n_blocks(),
        n_states: card.partition.n_states(),
    };
    let files = [
        (CURVES_FILE, curves_csv(card)),
        (SCORECARD_FILE, json(card)),
        (MI_MATRIX_FILE, mi_matrix_csv(card)),
        (PARTITION_FILE, json(&partition)),
    ];
    files
        .into_iter()
        .map(|(name, text)| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| ExperimentError::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

fn json<T: Serialize>(value: &T) -> String {
    to_json_string(value).expect("report values serialize")
}

/// Reads `scorecard.json` back from a report directory.
pub fn load_scorecard(dir: &Path) -> Result<Scorecard, ExperimentError> {
    let path = dir.join(SCORECARD_FILE);
    let text = fs::read_to_string(&path).map_err(|e| ExperimentError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
}
