//! Raw little-endian f64 arrays with JSON sidecars, and 16-bit PGM export.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regularizer::sidecar_path;
use crate::tomo::{GridSpec, Image, ScanGeometry, Sinogram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Sidecar {
    Image {
        grid: GridSpec,
    },
    Sinogram {
        n_views_full: usize,
        n_dets: usize,
        view_indices: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        geometry: Option<ScanGeometry>,
    },
}

pub fn f64s_to_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn f64s_from_bytes(buf: &[u8]) -> Result<Vec<f64>> {
    if !buf.len().is_multiple_of(8) {
        let offset = (buf.len() - buf.len() % 8) as u64;
        return Err(Error::format(offset, "raw data length is not a multiple of 8 bytes"));
    }
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn write_pair(path: &Path, values: &[f64], meta: &Sidecar) -> Result<()> {
    fs::write(path, f64s_to_bytes(values))?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

fn read_pair(path: &Path) -> Result<(Vec<f64>, Sidecar)> {
    let values = f64s_from_bytes(&fs::read(path)?)?;
    let meta: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    Ok((values, meta))
}

fn expect_len(values: &[f64], n: usize) -> Result<()> {
    if values.len() != n {
        let offset = (values.len().min(n) * 8) as u64;
        return Err(Error::format(
            offset,
            format!("sidecar declares {n} values, file holds {}", values.len()),
        ));
    }
    Ok(())
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    img.validate()?;
    write_pair(path, &img.values, &Sidecar::Image { grid: img.grid })
}

pub fn read_image(path: &Path) -> Result<Image> {
    match read_pair(path)? {
        (values, Sidecar::Image { grid }) => {
            grid.validate()?;
            expect_len(&values, grid.len())?;
            Image::new(grid, values)
        }
        _ => Err(Error::input(format!(
            "{} holds a sinogram, expected an image",
            path.display()
        ))),
    }
}

pub fn write_sinogram(path: &Path, sino: &Sinogram, geometry: Option<&ScanGeometry>) -> Result<()> {
    sino.validate()?;
    let meta = Sidecar::Sinogram {
        n_views_full: sino.n_views_full,
        n_dets: sino.n_dets,
        view_indices: sino.view_indices.clone(),
        geometry: geometry.cloned(),
    };
    write_pair(path, &sino.values, &meta)
}

/// Reads a sinogram and the geometry stored with it, if any.
pub fn read_sinogram(path: &Path) -> Result<(Sinogram, Option<ScanGeometry>)> {
    match read_pair(path)? {
        (
            values,
            Sidecar::Sinogram {
                n_views_full,
                n_dets,
                view_indices,
                geometry,
            },
        ) => {
            expect_len(&values, view_indices.len() * n_dets)?;
            Ok((Sinogram::new(n_views_full, n_dets, view_indices, values)?, geometry))
        }
        _ => Err(Error::input(format!(
            "{} holds an image, expected a sinogram",
            path.display()
        ))),
    }
}

/// 16-bit binary PGM, linearly scaled from the value range to `0..=65535`.
pub fn pgm_bytes(values: &[f64], width: usize, height: usize) -> Result<Vec<u8>> {
    if values.len() != width * height || values.is_empty() {
        return Err(Error::input("pgm plane does not match its shape"));
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::input("pgm plane contains non-finite values"));
    }
    let scale = if hi > lo { 65535.0 / (hi - lo) } else { 0.0 };
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &v in values {
        let q = ((v - lo) * scale).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, values: &[f64], width: usize, height: usize) -> Result<()> {
    fs::write(path, pgm_bytes(values, width, height)?)?;
    Ok(())
}
