use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "SD-LOOCV")]
    SdLoocv,
    #[serde(rename = "SI-LOSO")]
    SiLoso,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::SdLoocv => "SD-LOOCV",
            Protocol::SiLoso => "SI-LOSO",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SD-LOOCV" | "sd" => Ok(Protocol::SdLoocv),
            "SI-LOSO" | "si" => Ok(Protocol::SiLoso),
            _ => Err(Error::InvalidInput(format!("unknown protocol `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignerResult {
    pub signer: String,
    /// Mean of the fold accuracies for this signer.
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub folds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub feature_set: String,
    pub lda_dims: usize,
    pub vocabulary: Vec<String>,
    pub signers: Vec<SignerResult>,
    /// Unweighted mean over signers.
    pub mean_accuracy: f64,
    /// Rows are true classes, columns predictions, both in vocabulary order.
    pub confusion: Vec<Vec<usize>>,
    pub runtime_seconds: f64,
    /// Configuration snapshot in key=value form.
    pub config: String,
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    /// Trace over total of the pooled confusion matrix.
    pub fn pooled_accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let trace: usize = (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum();
        trace as f64 / total as f64
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        let c = self.vocabulary.len();
        if self.confusion.len() != c || self.confusion.iter().any(|r| r.len() != c) {
            return Err(Error::InvalidInput(format!("confusion matrix is not {c}x{c}")));
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn report_csv(r: &EvalReport) -> String {
    let mut out = String::from("key,value\n");
    let _ = writeln!(out, "protocol,{}", r.protocol);
    let _ = writeln!(out, "feature_set,{}", csv_field(&r.feature_set));
    let _ = writeln!(out, "lda_dims,{}", r.lda_dims);
    let _ = writeln!(out, "classes,{}", r.vocabulary.len());
    let _ = writeln!(out, "test_samples,{}", r.total());
    let _ = writeln!(out, "mean_accuracy,{:.6}", r.mean_accuracy);
    out.push_str("\nsigner,accuracy,correct,total,folds\n");
    for s in &r.signers {
        let _ = writeln!(out, "{},{:.6},{},{},{}", csv_field(&s.signer), s.accuracy, s.correct, s.total, s.folds);
    }
    out
}

fn confusion_csv(r: &EvalReport) -> String {
    let mut out = String::from("true\\predicted");
    for v in &r.vocabulary {
        out.push(',');
        out.push_str(&csv_field(v));
    }
    out.push('\n');
    for (v, row) in r.vocabulary.iter().zip(&r.confusion) {
        out.push_str(&csv_field(v));
        for n in row {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Row-normalised confusion heatmap, classes in vocabulary order.
pub fn confusion_svg(r: &EvalReport) -> String {
    const CELL: usize = 28;
    const MARGIN: usize = 110;
    let c = r.vocabulary.len();
    let size = MARGIN + c * CELL + 10;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(out, r#"<rect width="{size}" height="{size}" fill="white"/>"#);
    for (i, row) in r.confusion.iter().enumerate() {
        let total: usize = row.iter().sum();
        for (j, &n) in row.iter().enumerate() {
            let frac = if total == 0 { 0.0 } else { n as f64 / total as f64 };
            let shade = (255.0 * (1.0 - frac)).round() as u8;
            let (x, y) = (MARGIN + j * CELL, MARGIN + i * CELL);
            let _ = writeln!(
                out,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)" stroke="#ccc"><title>{} → {}: {n}</title></rect>"##,
                xml_escape(&r.vocabulary[i]),
                xml_escape(&r.vocabulary[j]),
            );
            if n > 0 {
                let colour = if frac > 0.5 { "white" } else { "black" };
                let _ = writeln!(
                    out,
                    r#"<text x="{}" y="{}" text-anchor="middle" fill="{colour}">{n}</text>"#,
                    x + CELL / 2,
                    y + CELL / 2 + 4
                );
            }
        }
    }
    for (k, v) in r.vocabulary.iter().enumerate() {
        let label = xml_escape(v);
        let pos = MARGIN + k * CELL + CELL / 2;
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{label}</text>"#, MARGIN - 4, pos + 4);
        let _ = writeln!(
            out,
            r#"<text x="{pos}" y="{}" text-anchor="start" transform="rotate(-90 {pos} {})">{label}</text>"#,
            MARGIN - 4,
            MARGIN - 4
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `report.csv`, `confusion.csv`, `confusion.svg`, `config.txt` and
/// `report.json` into `dir`. Only `report.json` carries the wall-clock
/// runtime, so the other files are identical across reruns.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<()> {
    report.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("report.csv", report_csv(report)),
        ("confusion.csv", confusion_csv(report)),
        ("confusion.svg", confusion_svg(report)),
        ("config.txt", report.config.clone()),
        ("report.json", report.to_json()?),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
