//! Binary symbol/waveform persistence.
//!
//! Data files hold little-endian f64 pairs (re, im), one block of `length`
//! complex samples per rail. A sidecar JSON header `<path>.json` carries
//! `{rate, length, n_pol, n_subcarriers, seed, power_dbm}`.
//!
//! Waveforms store rails x, y. Frames store rails sc0.x, sc0.y, sc1.x, ...
//! with `rate` set to the per-subcarrier baud.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ComplexSeq, DualPolWaveform, PolSymbols, SubcarrierSymbolFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformHeader {
    pub rate: f64,
    pub length: usize,
    pub n_pol: usize,
    pub n_subcarriers: usize,
    pub seed: u64,
    pub power_dbm: f64,
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

fn write_blocks(path: &Path, header: &WaveformHeader, blocks: &[&[Complex64]]) -> Result<()> {
    let mut buf = Vec::with_capacity(blocks.len() * header.length * 16);
    for block in blocks {
        debug_assert_eq!(block.len(), header.length);
        for s in *block {
            buf.extend_from_slice(&s.re.to_le_bytes());
            buf.extend_from_slice(&s.im.to_le_bytes());
        }
    }
    fs::File::create(path)?.write_all(&buf)?;
    fs::write(sidecar(path), serde_json::to_string_pretty(header)?)?;
    Ok(())
}

fn read_blocks(path: &Path) -> Result<(WaveformHeader, Vec<Vec<Complex64>>)> {
    let header: WaveformHeader = serde_json::from_str(&fs::read_to_string(sidecar(path))?)?;
    let mut raw = Vec::new();
    fs::File::open(path)?.read_to_end(&mut raw)?;
    let per_block = header.length * 16;
    if per_block == 0 || raw.len() % per_block != 0 {
        return Err(Error::Shape(format!(
            "file size {} not a multiple of block size {per_block}",
            raw.len()
        )));
    }
    let blocks = raw
        .chunks_exact(per_block)
        .map(|chunk| {
            chunk
                .chunks_exact(16)
                .map(|b| {
                    Complex64::new(
                        f64::from_le_bytes(b[0..8].try_into().unwrap()),
                        f64::from_le_bytes(b[8..16].try_into().unwrap()),
                    )
                })
                .collect()
        })
        .collect();
    Ok((header, blocks))
}

pub fn write_waveform(
    path: &Path,
    w: &DualPolWaveform,
    n_subcarriers: usize,
    seed: u64,
) -> Result<()> {
    let header = WaveformHeader {
        rate: w.rate(),
        length: w.len(),
        n_pol: 2,
        n_subcarriers,
        seed,
        power_dbm: w.center_power_dbm,
    };
    write_blocks(path, &header, &[w.x().samples(), w.y().samples()])
}

pub fn read_waveform(path: &Path) -> Result<(DualPolWaveform, WaveformHeader)> {
    let (header, blocks) = read_blocks(path)?;
    if blocks.len() != 2 {
        return Err(Error::Shape(format!("expected 2 rails, found {}", blocks.len())));
    }
    let mut it = blocks.into_iter();
    let x = ComplexSeq::new(it.next().unwrap(), header.rate)?;
    let y = ComplexSeq::new(it.next().unwrap(), header.rate)?;
    let w = DualPolWaveform::new(x, y, header.power_dbm)?;
    Ok((w, header))
}

pub fn write_frame(
    path: &Path,
    frame: &SubcarrierSymbolFrame,
    seed: u64,
    power_dbm: f64,
) -> Result<()> {
    let header = WaveformHeader {
        rate: frame.baud_per_subcarrier(),
        length: frame.n_symbols(),
        n_pol: 2,
        n_subcarriers: frame.n_subcarriers(),
        seed,
        power_dbm,
    };
    let blocks: Vec<&[Complex64]> = frame
        .subcarriers()
        .iter()
        .flat_map(|sc| [sc.x.as_slice(), sc.y.as_slice()])
        .collect();
    write_blocks(path, &header, &blocks)
}

/// Reads a frame back; `roll_off` is not part of the sidecar schema and must
/// be supplied by the caller (dataset manifests carry it).
pub fn read_frame(path: &Path, roll_off: f64) -> Result<(SubcarrierSymbolFrame, WaveformHeader)> {
    let (header, blocks) = read_blocks(path)?;
    if blocks.len() != 2 * header.n_subcarriers {
        return Err(Error::Shape(format!(
            "expected {} rails, found {}",
            2 * header.n_subcarriers,
            blocks.len()
        )));
    }
    let mut subcarriers = Vec::with_capacity(header.n_subcarriers);
    let mut it = blocks.into_iter();
    for _ in 0..header.n_subcarriers {
        let x = it.next().unwrap();
        let y = it.next().unwrap();
        subcarriers.push(PolSymbols { x, y });
    }
    let frame = SubcarrierSymbolFrame::new(subcarriers, header.rate, roll_off)?;
    Ok((frame, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waveform_round_trip() {
        let dir = std::env::temp_dir().join("dscm_io_test_wave");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("w.bin");
        let x = ComplexSeq::new(
            (0..32).map(|i| Complex64::new(i as f64, -(i as f64))).collect(),
            42e9,
        )
        .unwrap();
        let w = DualPolWaveform::new(x.clone(), x, 1.5).unwrap();
        write_waveform(&path, &w, 4, 99).unwrap();
        let (back, header) = read_waveform(&path).unwrap();
        assert_eq!(back, w);
        assert_eq!(header.seed, 99);
        assert_eq!(header.n_subcarriers, 4);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn frame_round_trip() {
        let dir = std::env::temp_dir().join("dscm_io_test_frame");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("f.bin");
        let sc = PolSymbols {
            x: vec![Complex64::new(0.5, -0.25); 16],
            y: vec![Complex64::new(-1.0, 1.0); 16],
        };
        let frame =
            SubcarrierSymbolFrame::new(vec![sc.clone(), sc], 8e9, 1.0 / 16.0).unwrap();
        write_frame(&path, &frame, 7, 2.0).unwrap();
        let (back, header) = read_frame(&path, 1.0 / 16.0).unwrap();
        assert_eq!(back, frame);
        assert_eq!(header.length, 16);
        fs::remove_dir_all(&dir).ok();
    }
}
