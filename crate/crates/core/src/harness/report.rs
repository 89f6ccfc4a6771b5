use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifiers::Architecture;
use crate::error::{Error, Result};
use crate::metrics::MacroMetrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Train and test on one language with its own embeddings.
    Mono,
    /// Train on one language, test on another, embeddings left unaligned.
    MonoTransfer,
    /// Train on all languages pooled, over a multilingual space.
    Multi,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Mono => "mono",
            Mode::MonoTransfer => "mono-transfer",
            Mode::Multi => "multi",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        [Mode::Mono, Mode::MonoTransfer, Mode::Multi]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub language: String,
    pub mode: Mode,
    pub arch: Architecture,
    /// Embedding variant (`mono`, `unaligned`, or a multilingual variant).
    pub embedding: String,
    pub metrics: MacroMetrics,
}

/// Measured rows of one experiment; summary rows are derived on demand.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Tsv,
}

fn first_seen<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for x in items {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

fn diff(a: &MacroMetrics, b: &MacroMetrics) -> MacroMetrics {
    MacroMetrics {
        f1: a.f1 - b.f1,
        precision: a.precision - b.precision,
        recall: a.recall - b.recall,
    }
}

impl MetricsReport {
    pub fn languages(&self) -> Vec<String> {
        first_seen(self.rows.iter().map(|r| r.language.clone()))
    }

    pub fn architectures(&self) -> Vec<Architecture> {
        first_seen(self.rows.iter().map(|r| r.arch))
    }

    pub fn find(&self, language: &str, mode: Mode, arch: Architecture) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.language == language && r.mode == mode && r.arch == arch)
    }

    fn multi_rows(&self, language: &str, arch: Architecture) -> impl Iterator<Item = &MetricsRow> + '_ {
        let language = language.to_string();
        self.rows
            .iter()
            .filter(move |r| r.language == language && r.arch == arch && r.mode == Mode::Multi)
    }

    /// Highest macro-F1 multi row; ties go to the variant name first in
    /// lexical order.
    pub fn best_multi(&self, language: &str, arch: Architecture) -> Option<&MetricsRow> {
        self.multi_rows(language, arch).fold(None, |best: Option<&MetricsRow>, r| match best {
            Some(b) if b.metrics.f1 > r.metrics.f1 || (b.metrics.f1 == r.metrics.f1 && b.embedding <= r.embedding) => Some(b),
            _ => Some(r),
        })
    }

    /// Arithmetic mean over every multi variant present.
    pub fn avg_multi(&self, language: &str, arch: Architecture) -> Option<MacroMetrics> {
        let rows: Vec<&MetricsRow> = self.multi_rows(language, arch).collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        Some(MacroMetrics {
            f1: rows.iter().map(|r| r.metrics.f1).sum::<f64>() / n,
            precision: rows.iter().map(|r| r.metrics.precision).sum::<f64>() / n,
            recall: rows.iter().map(|r| r.metrics.recall).sum::<f64>() / n,
        })
    }

    /// Best multi minus mono.
    pub fn gain(&self, language: &str, arch: Architecture) -> Option<MacroMetrics> {
        let best = self.best_multi(language, arch)?;
        let mono = self.find(language, Mode::Mono, arch)?;
        Some(diff(&best.metrics, &mono.metrics))
    }

    /// Best multi minus mono-transfer.
    pub fn transfer_gain(&self, language: &str, arch: Architecture) -> Option<MacroMetrics> {
        let best = self.best_multi(language, arch)?;
        let base = self.find(language, Mode::MonoTransfer, arch)?;
        Some(diff(&best.metrics, &base.metrics))
    }

    /// Measured and derived lines in display order:
    /// `(kind, language, mode, arch, embedding, metrics)`.
    fn lines(&self) -> Vec<(&'static str, String, String, Architecture, String, MacroMetrics)> {
        let mut out = Vec::new();
        for lang in self.languages() {
            for arch in self.architectures() {
                for r in self.rows.iter().filter(|r| r.language == lang && r.arch == arch) {
                    out.push(("row", lang.clone(), r.mode.name().into(), arch, r.embedding.clone(), r.metrics));
                }
                if let Some(b) = self.best_multi(&lang, arch) {
                    out.push(("best-multi", lang.clone(), "multi".into(), arch, b.embedding.clone(), b.metrics));
                }
                if let Some(a) = self.avg_multi(&lang, arch) {
                    out.push(("avg-multi", lang.clone(), "multi".into(), arch, "-".into(), a));
                }
                if let Some(g) = self.gain(&lang, arch) {
                    out.push(("gain", lang.clone(), "multi-mono".into(), arch, "-".into(), g));
                }
                if let Some(g) = self.transfer_gain(&lang, arch) {
                    out.push(("transfer-gain", lang.clone(), "multi-transfer".into(), arch, "-".into(), g));
                }
            }
        }
        out
    }
}

const TSV_HEADER: &str = "kind\tlanguage\tmode\tarch\tembedding\tf1\tprecision\trecall";

/// Renders per-language blocks: measured rows, then best multi, avg multi
/// and gain rows. Text shows percentages; TSV keeps full precision.
pub fn emit_report(report: &MetricsReport, format: ReportFormat) -> String {
    let mut s = String::new();
    match format {
        ReportFormat::Tsv => {
            let _ = writeln!(s, "# seed\t{}", report.seed);
            let _ = writeln!(s, "{TSV_HEADER}");
            for (kind, lang, mode, arch, emb, m) in report.lines() {
                let _ = writeln!(s, "{kind}\t{lang}\t{mode}\t{arch}\t{emb}\t{}\t{}\t{}", m.f1, m.precision, m.recall);
            }
        }
        ReportFormat::Text => {
            let _ = writeln!(s, "seed {}", report.seed);
            let mut current = String::new();
            for (kind, lang, mode, arch, emb, m) in report.lines() {
                if lang != current {
                    let _ = writeln!(s, "\n[{lang}]");
                    let _ = writeln!(
                        s,
                        "{:<12} {:<16} {:<14} {:>8} {:>8} {:>8}",
                        "arch", "row", "embedding", "F1", "P", "R"
                    );
                    current = lang.clone();
                }
                let label = match kind {
                    "row" => mode,
                    "best-multi" => "best multi".into(),
                    "avg-multi" => "avg multi".into(),
                    other => other.into(),
                };
                let signed = kind.ends_with("gain");
                let pct = |v: f64| if signed { format!("{:+.2}", 100.0 * v) } else { format!("{:.2}", 100.0 * v) };
                let _ = writeln!(
                    s,
                    "{:<12} {:<16} {:<14} {:>8} {:>8} {:>8}",
                    arch.name(),
                    label,
                    emb,
                    pct(m.f1),
                    pct(m.precision),
                    pct(m.recall)
                );
            }
        }
    }
    s
}

/// Parses TSV written by [`emit_report`]. Derived lines are recomputed from
/// the measured rows and must agree exactly.
pub fn parse_report_tsv(text: &str) -> Result<MetricsReport> {
    let mut report = MetricsReport::default();
    let mut derived = Vec::new();
    let bad = |line: usize, msg: &str| Error::parse("report", line, msg);
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if let Some(rest) = line.strip_prefix("# seed\t") {
            report.seed = rest.trim().parse().map_err(|_| bad(n, "bad seed"))?;
            continue;
        }
        if line.is_empty() || line == TSV_HEADER {
            continue;
        }
        let c: Vec<&str> = line.split('\t').collect();
        if c.len() != 8 {
            return Err(bad(n, "expected 8 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad number"));
        let metrics = MacroMetrics {
            f1: num(c[5])?,
            precision: num(c[6])?,
            recall: num(c[7])?,
        };
        let arch: Architecture = c[3].parse()?;
        if c[0] == "row" {
            report.rows.push(MetricsRow {
                language: c[1].into(),
                mode: Mode::parse(c[2])?,
                arch,
                embedding: c[4].into(),
                metrics,
            });
        } else {
            derived.push((c[0].to_string(), c[1].to_string(), arch, c[4].to_string(), metrics));
        }
    }
    let expected: Vec<_> = report
        .lines()
        .into_iter()
        .filter(|l| l.0 != "row")
        .map(|(k, l, _, a, e, m)| (k.to_string(), l, a, e, m))
        .collect();
    if expected != derived {
        return Err(Error::Precondition("summary rows disagree with measured rows".into()));
    }
    Ok(report)
}

pub fn save_report(report: &MetricsReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, fmt) in [("report.txt", ReportFormat::Text), ("report.tsv", ReportFormat::Tsv)] {
        let path = dir.join(name);
        std::fs::write(&path, emit_report(report, fmt)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(f1: f64) -> MacroMetrics {
        MacroMetrics {
            f1,
            precision: f1 + 0.01,
            recall: f1 - 0.01,
        }
    }

    fn row(lang: &str, mode: Mode, emb: &str, f1: f64) -> MetricsRow {
        MetricsRow {
            language: lang.into(),
            mode,
            arch: Architecture::FtMlp,
            embedding: emb.into(),
            metrics: m(f1),
        }
    }

    fn sample() -> MetricsReport {
        MetricsReport {
            seed: 4,
            rows: vec![
                row("de", Mode::Mono, "mono", 0.7),
                row("de", Mode::MonoTransfer, "unaligned", 0.3),
                row("de", Mode::Multi, "pseudo_dict", 0.8),
                row("de", Mode::Multi, "exp_dict", 0.8),
                row("de", Mode::Multi, "sent_ali", 0.6),
                row("en", Mode::Mono, "mono", 0.9),
            ],
        }
    }

    #[test]
    fn one_cell_one_row() {
        let r = MetricsReport {
            seed: 0,
            rows: vec![row("en", Mode::Mono, "mono", 0.5)],
        };
        let text = emit_report(&r, ReportFormat::Text);
        assert_eq!(text.lines().filter(|l| l.starts_with("ft-mlp")).count(), 1);
    }

    #[test]
    fn summary_rows() {
        let r = sample();
        assert_eq!(r.best_multi("de", Architecture::FtMlp).unwrap().embedding, "exp_dict");
        let g = r.gain("de", Architecture::FtMlp).unwrap();
        let recomputed = r.best_multi("de", Architecture::FtMlp).unwrap().metrics.f1 - r.find("de", Mode::Mono, Architecture::FtMlp).unwrap().metrics.f1;
        assert_eq!(g.f1, recomputed);
        let avg = r.avg_multi("de", Architecture::FtMlp).unwrap();
        assert!((avg.f1 - (0.8 + 0.8 + 0.6) / 3.0).abs() < 1e-9);
        assert!(r.gain("en", Architecture::FtMlp).is_none());
    }

    #[test]
    fn tsv_round_trip() {
        let r = sample();
        let tsv = emit_report(&r, ReportFormat::Tsv);
        assert_eq!(parse_report_tsv(&tsv).unwrap(), r);
    }

    #[test]
    fn tampered_summary_is_rejected() {
        let tsv = emit_report(&sample(), ReportFormat::Tsv).replace("best-multi\tde\tmulti\tft-mlp\texp_dict", "best-multi\tde\tmulti\tft-mlp\tpseudo_dict");
        assert!(parse_report_tsv(&tsv).is_err());
    }
}
