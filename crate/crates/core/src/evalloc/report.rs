//! Report serialization: recall, band, and localization tables as CSV plus a
//! JSON summary, and the retrieval-ranking CSV interchange format.

use super::{CampaignResult, RecallReport};
use crate::error::{Error, Result};
use crate::index::RetrievalResult;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// One `recall.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    pub texture: String,
    pub method: String,
    pub x_threshold: f64,
    pub k: usize,
    pub recall: f64,
}

/// One `bands.csv` row; `band` is `lt40` or `ge40`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub texture: String,
    pub method: String,
    pub band: String,
    pub correct: usize,
    pub available: usize,
}

/// One `localization.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRow {
    pub texture: String,
    pub source: String,
    pub success_rate: f64,
    pub mean_translation_err_m: f64,
    pub mean_rotation_err_rad: f64,
}

/// Failure counts per texture and method (JSON summary only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub texture: String,
    pub method: String,
    pub failures: usize,
    pub queries: usize,
}

/// Everything one evaluation run wants on disk.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportBundle {
    pub recall: Vec<RecallRow>,
    pub bands: Vec<BandRow>,
    pub localization: Vec<LocalizationRow>,
    pub failures: Vec<FailureEntry>,
}

impl ReportBundle {
    /// Fold one scored retrieval run into the bundle.
    pub fn add_recall_report(&mut self, texture: &str, method: &str, report: &RecallReport) {
        for entry in &report.entries {
            self.recall.push(RecallRow {
                texture: texture.to_string(),
                method: method.to_string(),
                x_threshold: entry.min_overlap,
                k: report.k,
                recall: entry.recall,
            });
        }
        for (band, count) in [("lt40", report.band_low), ("ge40", report.band_high)] {
            self.bands.push(BandRow {
                texture: texture.to_string(),
                method: method.to_string(),
                band: band.to_string(),
                correct: count.correct,
                available: count.available,
            });
        }
        let queries = report
            .entries
            .first()
            .map(|e| e.per_query.len())
            .unwrap_or(0);
        self.failures.push(FailureEntry {
            texture: texture.to_string(),
            method: method.to_string(),
            failures: report.failure_count,
            queries,
        });
    }

    pub fn add_campaign(&mut self, texture: &str, source: &str, campaign: &CampaignResult) {
        self.localization.push(LocalizationRow {
            texture: texture.to_string(),
            source: source.to_string(),
            success_rate: campaign.success_rate,
            mean_translation_err_m: campaign.mean_translation_err_m,
            mean_rotation_err_rad: campaign.mean_rotation_err_rad,
        });
    }
}

fn write_csv<R: Serialize>(rows: &[R], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<R>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Write `recall.csv`, `bands.csv`, `localization.csv` and `summary.json`
/// under `dir`. Empty bundles still produce schema-valid (header-only) files.
pub fn emit_report(bundle: &ReportBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    // csv::Writer skips headers when no row is serialized; write them by hand
    // for the empty case.
    if bundle.recall.is_empty() {
        fs::write(
            dir.join("recall.csv"),
            "texture,method,x_threshold,k,recall\n",
        )
        .map_err(|e| Error::io(dir.join("recall.csv"), e))?;
    } else {
        write_csv(&bundle.recall, &dir.join("recall.csv"))?;
    }
    if bundle.bands.is_empty() {
        fs::write(
            dir.join("bands.csv"),
            "texture,method,band,correct,available\n",
        )
        .map_err(|e| Error::io(dir.join("bands.csv"), e))?;
    } else {
        write_csv(&bundle.bands, &dir.join("bands.csv"))?;
    }
    if bundle.localization.is_empty() {
        fs::write(
            dir.join("localization.csv"),
            "texture,source,success_rate,mean_translation_err_m,mean_rotation_err_rad\n",
        )
        .map_err(|e| Error::io(dir.join("localization.csv"), e))?;
    } else {
        write_csv(&bundle.localization, &dir.join("localization.csv"))?;
    }
    let json = serde_json::to_string_pretty(bundle)
        .map_err(|e| Error::format(dir.join("summary.json"), e.to_string()))?;
    fs::write(dir.join("summary.json"), json).map_err(|e| Error::io(dir.join("summary.json"), e))
}

/// Read a report directory back (CSV side only).
pub fn read_report(dir: &Path) -> Result<ReportBundle> {
    let summary_path = dir.join("summary.json");
    let failures = if summary_path.exists() {
        let text = fs::read_to_string(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
        serde_json::from_str::<ReportBundle>(&text)
            .map_err(|e| Error::format(&summary_path, e.to_string()))?
            .failures
    } else {
        Vec::new()
    };
    Ok(ReportBundle {
        recall: read_csv(&dir.join("recall.csv"))?,
        bands: read_csv(&dir.join("bands.csv"))?,
        localization: read_csv(&dir.join("localization.csv"))?,
        failures,
    })
}

pub const RETRIEVAL_CSV_HEADER: &str = "query_id,rank,ref_id,distance";

/// Write per-query rankings as `query_id,rank,ref_id,distance` rows.
pub fn write_retrieval(results: &[RetrievalResult], path: &Path) -> Result<()> {
    let mut text = String::from(RETRIEVAL_CSV_HEADER);
    text.push('\n');
    for result in results {
        for (rank, (ref_id, dist)) in result.ranked.iter().enumerate() {
            text.push_str(&format!(
                "{},{},{},{}\n",
                result.query_id, rank, ref_id, dist
            ));
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read rankings written by [`write_retrieval`]; `k` restores the requested
/// neighbor count metadata.
pub fn read_retrieval(path: &Path, k: usize) -> Result<Vec<RetrievalResult>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == RETRIEVAL_CSV_HEADER => {}
        _ => {
            return Err(Error::parse(
                path,
                1,
                format!("expected header '{RETRIEVAL_CSV_HEADER}'"),
            ))
        }
    }
    let mut results: Vec<RetrievalResult> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::parse(path, line_no, "expected 4 fields"));
        }
        let distance: f32 = f[3]
            .parse()
            .map_err(|_| Error::parse(path, line_no, "bad distance"))?;
        let rank: usize = f[1]
            .parse()
            .map_err(|_| Error::parse(path, line_no, "bad rank"))?;
        match results.last_mut() {
            Some(last) if last.query_id == f[0] => {
                if rank != last.ranked.len() {
                    return Err(Error::parse(path, line_no, "ranks out of order"));
                }
                last.ranked.push((f[2].to_string(), distance));
            }
            _ => {
                if rank != 0 {
                    return Err(Error::parse(path, line_no, "ranking must start at 0"));
                }
                results.push(RetrievalResult {
                    query_id: f[0].to_string(),
                    ranked: vec![(f[2].to_string(), distance)],
                    k,
                });
            }
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalloc::{BandCount, RecallEntry, RecallReport};

    fn sample_report() -> RecallReport {
        RecallReport {
            k: 10,
            entries: crate::evalloc::RECALL_THRESHOLDS
                .iter()
                .map(|&x| RecallEntry {
                    min_overlap: x,
                    k: 10,
                    recall: 1.0 - x / 2.0,
                    included_queries: 4,
                    per_query: Vec::new(),
                })
                .collect(),
            failure_count: 1,
            band_low: BandCount {
                correct: 3,
                available: 7,
            },
            band_high: BandCount {
                correct: 5,
                available: 5,
            },
        }
    }

    #[test]
    fn empty_bundle_writes_schema_valid_files() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&ReportBundle::default(), dir.path()).unwrap();
        let back = read_report(dir.path()).unwrap();
        assert!(back.recall.is_empty());
        assert!(back.bands.is_empty());
        assert!(back.localization.is_empty());
        let header = fs::read_to_string(dir.path().join("recall.csv")).unwrap();
        assert!(header.starts_with("texture,method,x_threshold,k,recall"));
    }

    #[test]
    fn bundle_round_trips_through_csv() {
        let mut bundle = ReportBundle::default();
        bundle.add_recall_report("speckle", "dml", &sample_report());
        bundle.localization.push(LocalizationRow {
            texture: "speckle".into(),
            source: "none".into(),
            success_rate: 0.95,
            mean_translation_err_m: 0.001,
            mean_rotation_err_rad: 0.002,
        });
        let dir = tempfile::tempdir().unwrap();
        emit_report(&bundle, dir.path()).unwrap();
        let back = read_report(dir.path()).unwrap();
        assert_eq!(back.recall, bundle.recall);
        assert_eq!(back.bands, bundle.bands);
        assert_eq!(back.localization, bundle.localization);
        assert_eq!(back.failures, bundle.failures);
    }

    #[test]
    fn recall_rows_cover_all_thresholds() {
        let mut bundle = ReportBundle::default();
        bundle.add_recall_report("grid", "bow", &sample_report());
        let xs: Vec<f64> = bundle.recall.iter().map(|r| r.x_threshold).collect();
        assert_eq!(xs, vec![0.0, 0.2, 0.4, 0.6, 0.8]);
    }

    #[test]
    fn retrieval_csv_round_trip() {
        let results = vec![
            RetrievalResult {
                query_id: "q1".into(),
                ranked: vec![("a".into(), 0.5), ("b".into(), 0.75)],
                k: 2,
            },
            RetrievalResult {
                query_id: "q2".into(),
                ranked: vec![("c".into(), 0.25)],
                k: 2,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("retrieval.csv");
        write_retrieval(&results, &path).unwrap();
        let back = read_retrieval(&path, 2).unwrap();
        assert_eq!(back, results);
    }
}
