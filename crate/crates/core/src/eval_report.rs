//! Test-set evaluation: error rate, confusion matrix, misclassified digits
//! with their two most likely predictions.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::deform::{upscale_all, NormImage, NORM_PIXELS, NORM_SIDE};
use crate::kernels::Engine;
use crate::mnist_io::{Dataset, Label};
use crate::network::{size_check, Classifier, NetworkError, N_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Misclassified {
    pub index: usize,
    pub truth: u8,
    pub first: u8,
    pub second: u8,
    #[serde(skip)]
    pub image: NormImage,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub error_percent: f64,
    pub misclassified: Vec<Misclassified>,
    /// `confusion[truth][first guess]`.
    pub confusion: [[u32; N_CLASSES]; N_CLASSES],
    /// Misclassified samples whose second guess is the true digit.
    pub second_guess_correct: usize,
}

impl EvalReport {
    pub fn errors(&self) -> usize {
        self.misclassified.len()
    }

    pub fn summary(&self) -> String {
        format!(
            "test error {:.2}% ({}/{}), second guess correct for {} of {}",
            self.error_percent,
            self.errors(),
            self.n,
            self.second_guess_correct,
            self.errors()
        )
    }

    pub fn confusion_table(&self) -> String {
        let mut s = String::from("true\\guess");
        for g in 0..N_CLASSES {
            s.push_str(&format!("\t{g}"));
        }
        for (t, row) in self.confusion.iter().enumerate() {
            s.push_str(&format!("\n{t}"));
            for c in row {
                s.push_str(&format!("\t{c}"));
            }
        }
        s
    }
}

/// Evaluates `model` on the un-deformed, upscaled test images.
pub fn evaluate(model: &impl Classifier, test: &Dataset, engine: &Engine) -> Result<EvalReport, NetworkError> {
    size_check("classifier input", NORM_PIXELS, model.input_len())?;
    evaluate_samples(model, &upscale_all(test, engine), engine)
}

pub fn evaluate_samples(
    model: &impl Classifier,
    samples: &[(NormImage, Label)],
    engine: &Engine,
) -> Result<EvalReport, NetworkError> {
    let ranked = engine.map_indexed(samples.len(), |i| model.rank(samples[i].0.as_slice()));
    let mut confusion = [[0u32; N_CLASSES]; N_CLASSES];
    let mut misclassified = Vec::new();
    let mut second_guess_correct = 0;
    for (index, (r, (img, label))) in ranked.into_iter().zip(samples).enumerate() {
        let r = r?;
        let (truth, first, second) = (label.digit(), r.first(), r.second());
        confusion[truth as usize][first as usize] += 1;
        if first != truth {
            second_guess_correct += usize::from(second == truth);
            misclassified.push(Misclassified { index, truth, first, second, image: img.clone() });
        }
    }
    let n = samples.len();
    let error_percent = if n == 0 { 0.0 } else { 100.0 * misclassified.len() as f64 / n as f64 };
    Ok(EvalReport { n, error_percent, misclassified, confusion, second_guess_correct })
}

/// Writes one PGM per misclassified digit plus `manifest.tsv` listing file,
/// test index, true digit and both guesses. Returns the manifest path.
pub fn render_misclassified(report: &EvalReport, out_dir: &Path) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let manifest = out_dir.join("manifest.tsv");
    let mut m = std::io::BufWriter::new(std::fs::File::create(&manifest)?);
    writeln!(m, "file\tindex\ttrue\tguess1\tguess2")?;
    for e in &report.misclassified {
        let name = format!("{:05}_true{}_guess{}{}.pgm", e.index, e.truth, e.first, e.second);
        crate::pgm::write(&out_dir.join(&name), NORM_SIDE, NORM_SIDE, e.image.as_slice())?;
        writeln!(m, "{name}\t{}\t{}\t{}\t{}", e.index, e.truth, e.first, e.second)?;
    }
    m.flush()?;
    Ok(manifest)
}
