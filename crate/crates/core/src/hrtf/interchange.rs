//! Interchange format: `<name>.hrtfset.json` manifest plus `<name>.hrtfset.f32`
//! sample blob.
//!
//! The blob stores, for every entry at its `offset` (counted in elements),
//! `ir_length` left samples followed by `ir_length` right samples as
//! little-endian 32-bit floats.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use super::{Direction, HrtfEntry, HrtfSet, Hrir};
use crate::error::{Error, Result};
use crate::scalar::Real;

const MANIFEST_SUFFIX: &str = ".hrtfset.json";
const BLOB_SUFFIX: &str = ".hrtfset.f32";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HrtfFormat {
    #[default]
    Interchange,
}

impl HrtfFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let name = path.to_string_lossy();
        if name.ends_with(MANIFEST_SUFFIX) {
            Ok(HrtfFormat::Interchange)
        } else {
            Err(Error::format(
                "<file>",
                format!("unrecognized HRTF file `{name}`, expected *{MANIFEST_SUFFIX}"),
            ))
        }
    }
}

/// Path of the sample blob belonging to a manifest path.
pub fn blob_path_for(manifest: &Path) -> Result<PathBuf> {
    let name = manifest.to_string_lossy();
    match name.strip_suffix(MANIFEST_SUFFIX) {
        Some(stem) => Ok(PathBuf::from(format!("{stem}{BLOB_SUFFIX}"))),
        None => Err(Error::format(
            "<file>",
            format!("manifest name `{name}` must end with {MANIFEST_SUFFIX}"),
        )),
    }
}

#[derive(Serialize)]
struct ManifestOut<'a> {
    subject_id: &'a str,
    sample_rate: u32,
    radius_m: f64,
    ir_length: usize,
    entries: Vec<EntryOut>,
}

#[derive(Serialize)]
struct EntryOut {
    azimuth_deg: f64,
    elevation_deg: f64,
    offset: usize,
}

fn field<'a>(obj: &'a Value, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::format(path_join(path, key), "missing field"))
}

fn path_join(parent: &str, key: &str) -> String {
    if parent.is_empty() {
        key.to_string()
    } else {
        format!("{parent}.{key}")
    }
}

fn as_positive_int(v: &Value, path: &str) -> Result<u64> {
    match v.as_u64() {
        Some(n) if n > 0 => Ok(n),
        _ => Err(Error::format(path, "expected a positive integer")),
    }
}

fn as_number(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::format(path, "expected a finite number"))
}

/// Loads and validates an HRTF set.
pub fn load_hrtf_set<T: Real>(path: &Path, format: HrtfFormat) -> Result<HrtfSet<T>> {
    match format {
        HrtfFormat::Interchange => load_interchange(path),
    }
}

fn load_interchange<T: Real>(path: &Path) -> Result<HrtfSet<T>> {
    let blob_path = blob_path_for(path)?;
    let text = fs::read_to_string(path)?;
    let root: Value = serde_json::from_str(&text)
        .map_err(|e| Error::format("<root>", format!("invalid JSON: {e}")))?;
    if !root.is_object() {
        return Err(Error::format("<root>", "expected a JSON object"));
    }

    let subject_id = field(&root, "subject_id", "")?
        .as_str()
        .ok_or_else(|| Error::format("subject_id", "expected a string"))?
        .to_string();
    let sample_rate = as_positive_int(field(&root, "sample_rate", "")?, "sample_rate")?;
    let sample_rate = u32::try_from(sample_rate)
        .map_err(|_| Error::format("sample_rate", "value out of range"))?;
    let radius_m = as_number(field(&root, "radius_m", "")?, "radius_m")?;
    if radius_m <= 0.0 {
        return Err(Error::format("radius_m", "must be positive"));
    }
    let ir_length = as_positive_int(field(&root, "ir_length", "")?, "ir_length")? as usize;
    let entries = field(&root, "entries", "")?
        .as_array()
        .ok_or_else(|| Error::format("entries", "expected an array"))?;
    if entries.is_empty() {
        return Err(Error::format("entries", "at least one entry is required"));
    }

    let bytes = fs::read(&blob_path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format(
            "<blob>",
            format!("blob size {} is not a multiple of 4 bytes", bytes.len()),
        ));
    }
    let samples: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let mut out = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let base = format!("entries[{i}]");
        if !entry.is_object() {
            return Err(Error::format(base, "expected an object"));
        }
        let az = as_number(field(entry, "azimuth_deg", &base)?, &path_join(&base, "azimuth_deg"))?;
        let el = as_number(
            field(entry, "elevation_deg", &base)?,
            &path_join(&base, "elevation_deg"),
        )?;
        let direction = Direction::new(az, el)
            .map_err(|e| Error::format(path_join(&base, "elevation_deg"), e.to_string()))?;
        let offset_path = path_join(&base, "offset");
        let offset = field(entry, "offset", &base)?
            .as_u64()
            .ok_or_else(|| Error::format(&offset_path, "expected a non-negative integer"))?
            as usize;
        let left_end = offset + ir_length;
        let right_end = left_end + ir_length;
        if left_end > samples.len() {
            return Err(Error::format(&offset_path, "left channel extends past end of blob"));
        }
        if right_end > samples.len() {
            return Err(Error::format(&offset_path, "right channel missing from blob"));
        }
        let convert = |s: &[f32]| -> Result<Vec<T>> {
            s.iter()
                .map(|&v| {
                    if v.is_finite() {
                        Ok(T::lit(v as f64))
                    } else {
                        Err(Error::format(&offset_path, "non-finite sample in blob"))
                    }
                })
                .collect()
        };
        let hrir = Hrir::new(
            convert(&samples[offset..left_end])?,
            convert(&samples[left_end..right_end])?,
            sample_rate,
        )?;
        out.push(HrtfEntry { direction, hrir });
    }
    HrtfSet::new(subject_id, sample_rate, radius_m, out)
}

/// Writes the manifest at `path` and the blob next to it. Samples are stored as
/// 32-bit floats.
pub fn save_hrtf_set<T: Real>(set: &HrtfSet<T>, path: &Path) -> Result<()> {
    let blob_path = blob_path_for(path)?;
    let n = set.ir_length();
    let manifest = ManifestOut {
        subject_id: set.subject_id(),
        sample_rate: set.sample_rate(),
        radius_m: set.radius_m(),
        ir_length: n,
        entries: set
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| EntryOut {
                azimuth_deg: e.direction.azimuth_deg(),
                elevation_deg: e.direction.elevation_deg(),
                offset: 2 * n * i,
            })
            .collect(),
    };
    let mut bytes = Vec::with_capacity(set.len() * 2 * n * 4);
    for e in set.entries() {
        for &v in e.hrir.left().iter().chain(e.hrir.right()) {
            let v = v.to_f32().expect("finite sample");
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidInput(format!("cannot serialize manifest: {e}")))?;
    fs::write(path, json + "\n")?;
    fs::write(blob_path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrtf::model::{GridSpec, SphericalHeadModel};

    fn write(dir: &Path, name: &str, manifest: &str, blob: &[f32]) -> PathBuf {
        let path = dir.join(format!("{name}.hrtfset.json"));
        fs::write(&path, manifest).unwrap();
        let bytes: Vec<u8> = blob.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.join(format!("{name}.hrtfset.f32")), bytes).unwrap();
        path
    }

    #[test]
    fn single_entry_set_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "one",
            r#"{"subject_id":"s1","sample_rate":16000,"radius_m":1.2,"ir_length":2,
                "entries":[{"azimuth_deg":-30,"elevation_deg":0,"offset":0}]}"#,
            &[1.0, 0.5, 0.25, 0.125],
        );
        let set: HrtfSet<f64> = load_hrtf_set(&path, HrtfFormat::Interchange).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.entry(0).direction.azimuth_deg(), 330.0);
        assert_eq!(set.entry(0).hrir.left(), &[1.0, 0.5]);
        assert_eq!(set.entry(0).hrir.right(), &[0.25, 0.125]);
    }

    #[test]
    fn duplicate_direction_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "dup",
            r#"{"subject_id":"s1","sample_rate":16000,"radius_m":1.2,"ir_length":1,
                "entries":[{"azimuth_deg":10,"elevation_deg":0,"offset":0},
                           {"azimuth_deg":370,"elevation_deg":0,"offset":2}]}"#,
            &[1.0, 1.0, 1.0, 1.0],
        );
        let err = load_hrtf_set::<f64>(&path, HrtfFormat::Interchange).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }

    #[test]
    fn schema_errors_carry_field_path() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            (r#"{"sample_rate":16000,"radius_m":1,"ir_length":1,"entries":[]}"#, "subject_id"),
            (
                r#"{"subject_id":"a","sample_rate":-3,"radius_m":1,"ir_length":1,"entries":[]}"#,
                "sample_rate",
            ),
            (
                r#"{"subject_id":"a","sample_rate":16000,"radius_m":1,"ir_length":1,
                    "entries":[{"azimuth_deg":0,"offset":0}]}"#,
                "entries[0].elevation_deg",
            ),
            (
                r#"{"subject_id":"a","sample_rate":16000,"radius_m":1,"ir_length":1,
                    "entries":[{"azimuth_deg":0,"elevation_deg":0,"offset":1}]}"#,
                "entries[0].offset",
            ),
        ];
        for (i, (manifest, expected)) in cases.iter().enumerate() {
            let path = write(dir.path(), &format!("c{i}"), manifest, &[1.0, 1.0]);
            match load_hrtf_set::<f64>(&path, HrtfFormat::Interchange) {
                Err(Error::Format { path, .. }) => assert_eq!(&path, expected),
                other => panic!("case {i}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn full_grid_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let set = SphericalHeadModel::default()
            .build_grid(&GridSpec::default(), 16_000, 64)
            .unwrap();
        let path = dir.path().join("grid.hrtfset.json");
        save_hrtf_set(&set, &path).unwrap();
        let loaded: HrtfSet<f64> = load_hrtf_set(&path, HrtfFormat::from_path(&path).unwrap()).unwrap();
        assert_eq!(loaded.len(), 60 * 61);
        let path2 = dir.path().join("again.hrtfset.json");
        save_hrtf_set(&loaded, &path2).unwrap();
        let reloaded: HrtfSet<f64> = load_hrtf_set(&path2, HrtfFormat::Interchange).unwrap();
        assert_eq!(
            fs::read(blob_path_for(&path).unwrap()).unwrap(),
            fs::read(blob_path_for(&path2).unwrap()).unwrap()
        );
        for (a, b) in loaded.entries().iter().zip(reloaded.entries()) {
            assert_eq!(a, b);
        }
    }
}
