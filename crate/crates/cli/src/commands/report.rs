//! `report`: aggregate metrics JSON files into one comparison CSV, one row
//! per input named by its file stem.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use biscuit_core::eval::MetricsReport;
use clap::Args;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Metrics JSON files written by eval.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let mut csv =
        String::from("run,r2_diag,r2_sep,spearman_diag,spearman_sep,interaction_f1_mean,shd\n");
    for path in &args.inputs {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let m: MetricsReport = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        csv.push_str(&format!(
            "{stem},{},{},{},{},{},{}\n",
            m.r2_diag, m.r2_sep, m.spearman_diag, m.spearman_sep, m.interaction_f1_mean, m.shd
        ));
    }
    match &args.out {
        Some(path) => {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}
