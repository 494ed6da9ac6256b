//! Map manifest I/O.
//!
//! A map set serializes to a directory holding one grayscale PNG (or PGM) per
//! image plus a UTF-8 CSV manifest with the header
//! `id,path,x_m,y_m,theta_rad,width_m,height_m,role` where `role` is
//! `reference` or `query`. Paths are relative to the manifest's directory.

use super::{CanvasMeta, GroundImage, MapSet};
use crate::error::{Error, Result};
use crate::geometry::Pose2D;
use crate::raster::Raster;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

pub const MANIFEST_HEADER: &str = "id,path,x_m,y_m,theta_rad,width_m,height_m,role";

/// Write a map set as images + manifest under `dir` (created if missing).
///
/// Output is byte-deterministic for a given map set.
pub fn write_mapset(mapset: &MapSet, dir: &Path) -> Result<()> {
    let images_dir = dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    let mut manifest = String::from(MANIFEST_HEADER);
    manifest.push('\n');
    for (role, img) in mapset
        .references
        .iter()
        .map(|r| ("reference", r))
        .chain(mapset.queries.iter().map(|q| ("query", q)))
    {
        let rel = format!("images/{}.png", img.id);
        img.pixels.save(&dir.join(&rel))?;
        manifest.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            img.id, rel, img.pose.x, img.pose.y, img.pose.theta, img.width_m, img.height_m, role
        ));
    }
    let manifest_path = dir.join("manifest.csv");
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;

    let meta_path = dir.join("canvas.json");
    let meta = serde_json::to_string_pretty(&mapset.canvas_meta)
        .map_err(|e| Error::format(&meta_path, e.to_string()))?;
    fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

/// Load a map set from a manifest file, validating ids, poses and rasters.
pub fn ingest_mapset(manifest_path: &Path) -> Result<MapSet> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == MANIFEST_HEADER => {}
        Some((_, header)) => {
            return Err(Error::parse(
                manifest_path,
                1,
                format!("unexpected header '{header}', want '{MANIFEST_HEADER}'"),
            ))
        }
        None => return Err(Error::parse(manifest_path, 1, "empty manifest")),
    }

    let mut references = Vec::new();
    let mut queries = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();

    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::parse(
                manifest_path,
                line_no,
                format!("expected 8 fields, found {}", fields.len()),
            ));
        }
        let id = fields[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::parse(manifest_path, line_no, "empty id"));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::parse(
                manifest_path,
                line_no,
                format!("duplicate id '{id}'"),
            ));
        }
        let parse_f64 = |name: &str, raw: &str| -> Result<f64> {
            let v: f64 = raw.trim().parse().map_err(|_| {
                Error::parse(
                    manifest_path,
                    line_no,
                    format!("field '{name}' is not a number: '{raw}'"),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    manifest_path,
                    line_no,
                    format!("field '{name}' must be finite, got '{raw}'"),
                ));
            }
            Ok(v)
        };
        let x = parse_f64("x_m", fields[2])?;
        let y = parse_f64("y_m", fields[3])?;
        let theta = parse_f64("theta_rad", fields[4])?;
        let width_m = parse_f64("width_m", fields[5])?;
        let height_m = parse_f64("height_m", fields[6])?;
        if width_m <= 0.0 || height_m <= 0.0 {
            return Err(Error::parse(
                manifest_path,
                line_no,
                "width_m and height_m must be positive",
            ));
        }
        let pose = Pose2D::new(x, y, theta)
            .map_err(|e| Error::parse(manifest_path, line_no, e.to_string()))?;

        let img_path = base.join(fields[1].trim());
        let pixels = Raster::load(&img_path)?;
        let image = GroundImage {
            id,
            pixels,
            pose,
            width_m,
            height_m,
        };
        match fields[7].trim() {
            "reference" => references.push(image),
            "query" => queries.push(image),
            other => {
                return Err(Error::parse(
                    manifest_path,
                    line_no,
                    format!("role must be 'reference' or 'query', got '{other}'"),
                ))
            }
        }
    }

    let canvas_meta = read_canvas_meta(base, &references, &queries);
    let mapset = MapSet {
        references,
        queries,
        canvas_meta,
    };
    mapset.validate()?;
    Ok(mapset)
}

fn read_canvas_meta(base: &Path, references: &[GroundImage], queries: &[GroundImage]) -> CanvasMeta {
    let sidecar = base.join("canvas.json");
    if let Ok(text) = fs::read_to_string(&sidecar) {
        if let Ok(meta) = serde_json::from_str::<CanvasMeta>(&text) {
            return meta;
        }
    }
    // Ingested sets without a sidecar: derive the extent from footprints.
    let mut max_x: f64 = 0.0;
    let mut max_y: f64 = 0.0;
    let mut resolution = 0.0;
    for img in references.iter().chain(queries.iter()) {
        for c in img.footprint().corners {
            max_x = max_x.max(c[0]);
            max_y = max_y.max(c[1]);
        }
        resolution = img.pixels.width() as f64 / img.width_m;
    }
    CanvasMeta {
        seed: 0,
        style: "ingested".to_string(),
        extent_m: (max_x, max_y),
        resolution,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_canvas, generate_mapset, CanvasConfig, MapSetConfig, TextureStyle};

    fn sample_mapset() -> MapSet {
        let canvas = generate_canvas(&CanvasConfig {
            style: TextureStyle::Speckle,
            extent_m: (0.8, 0.7),
            resolution: 400.0,
            seed: 1,
            ..CanvasConfig::default()
        })
        .unwrap();
        generate_mapset(
            &canvas,
            &MapSetConfig {
                n_queries: 2,
                seed: 2,
                ..MapSetConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_images_and_poses() {
        let dir = tempfile::tempdir().unwrap();
        let ms = sample_mapset();
        write_mapset(&ms, dir.path()).unwrap();
        let back = ingest_mapset(&dir.path().join("manifest.csv")).unwrap();
        assert_eq!(back.references.len(), ms.references.len());
        assert_eq!(back.queries.len(), ms.queries.len());
        for (a, b) in ms.references.iter().zip(back.references.iter()) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.pixels, b.pixels);
            assert!((a.pose.x - b.pose.x).abs() < 1e-15);
            assert!((a.pose.theta - b.pose.theta).abs() < 1e-15);
        }
        assert_eq!(back.canvas_meta.style, "speckle");
    }

    #[test]
    fn three_row_manifest_parses() {
        let dir = tempfile::tempdir().unwrap();
        let img = Raster::new(40, 30);
        for i in 0..3 {
            img.save(&dir.path().join(format!("im{i}.png"))).unwrap();
        }
        let manifest = dir.path().join("manifest.csv");
        fs::write(
            &manifest,
            format!(
                "{MANIFEST_HEADER}\n\
                 a,im0.png,0.0,0.0,0.0,0.2,0.15,reference\n\
                 b,im1.png,0.1,0.0,0.0,0.2,0.15,reference\n\
                 c,im2.png,0.0,0.1,0.0,0.2,0.15,reference\n"
            ),
        )
        .unwrap();
        let ms = ingest_mapset(&manifest).unwrap();
        assert_eq!(ms.references.len(), 3);
        assert!(ms.queries.is_empty());
    }

    #[test]
    fn nan_theta_is_a_parse_error_naming_the_row() {
        let dir = tempfile::tempdir().unwrap();
        Raster::new(40, 30).save(&dir.path().join("im.png")).unwrap();
        let manifest = dir.path().join("manifest.csv");
        fs::write(
            &manifest,
            format!("{MANIFEST_HEADER}\na,im.png,0.0,0.0,NaN,0.2,0.15,reference\n"),
        )
        .unwrap();
        let err = ingest_mapset(&manifest).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn missing_image_is_io_error_naming_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("manifest.csv");
        fs::write(
            &manifest,
            format!("{MANIFEST_HEADER}\na,gone.png,0.0,0.0,0.0,0.2,0.15,reference\n"),
        )
        .unwrap();
        let err = ingest_mapset(&manifest).unwrap_err();
        assert!(err.to_string().contains("gone.png"), "got: {err}");
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        Raster::new(40, 30).save(&dir.path().join("im.png")).unwrap();
        let manifest = dir.path().join("manifest.csv");
        fs::write(
            &manifest,
            format!(
                "{MANIFEST_HEADER}\n\
                 a,im.png,0.0,0.0,0.0,0.2,0.15,reference\n\
                 a,im.png,0.1,0.0,0.0,0.2,0.15,query\n"
            ),
        )
        .unwrap();
        assert!(matches!(
            ingest_mapset(&manifest),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn write_is_byte_deterministic() {
        let ms = sample_mapset();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_mapset(&ms, d1.path()).unwrap();
        write_mapset(&ms, d2.path()).unwrap();
        let m1 = fs::read(d1.path().join("manifest.csv")).unwrap();
        let m2 = fs::read(d2.path().join("manifest.csv")).unwrap();
        assert_eq!(m1, m2);
        let i1 = fs::read(d1.path().join("images/ref_0000.png")).unwrap();
        let i2 = fs::read(d2.path().join("images/ref_0000.png")).unwrap();
        assert_eq!(i1, i2);
    }
}
