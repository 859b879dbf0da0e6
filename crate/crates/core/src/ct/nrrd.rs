//! A strict subset of NRRD: `NRRD0004`, 3D, `short` or `uchar`, raw
//! little-endian payload, spacing given by `spacings` or a diagonal
//! `space directions` matrix. Anything else is refused with the offending
//! field named.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::volume::{Geometry, HounsfieldVolume, LabelVolume};
use crate::error::{Error, Result};

const MAGIC: &str = "NRRD0004";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarType {
    Short,
    UChar,
}

impl ScalarType {
    fn size(self) -> usize {
        match self {
            ScalarType::Short => 2,
            ScalarType::UChar => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ScalarType::Short => "short",
            ScalarType::UChar => "uchar",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Voxels {
    Short(Vec<i16>),
    UChar(Vec<u8>),
}

/// A decoded NRRD volume before any CT-specific validation.
#[derive(Clone, Debug, PartialEq)]
pub struct NrrdVolume {
    pub geometry: Geometry,
    pub voxels: Voxels,
}

impl NrrdVolume {
    pub fn into_hounsfield(self) -> Result<HounsfieldVolume> {
        match self.voxels {
            Voxels::Short(v) => HounsfieldVolume::new(self.geometry, v),
            Voxels::UChar(_) => Err(Error::InvalidVolume("expected a short (HU) volume, found uchar".into())),
        }
    }

    pub fn into_labels(self) -> Result<LabelVolume> {
        match self.voxels {
            Voxels::UChar(v) => LabelVolume::new(self.geometry, v),
            Voxels::Short(_) => Err(Error::InvalidVolume("expected a uchar label volume, found short".into())),
        }
    }
}

impl From<&HounsfieldVolume> for NrrdVolume {
    fn from(v: &HounsfieldVolume) -> Self {
        NrrdVolume {
            geometry: *v.geometry(),
            voxels: Voxels::Short(v.hu().to_vec()),
        }
    }
}

impl From<&LabelVolume> for NrrdVolume {
    fn from(v: &LabelVolume) -> Self {
        NrrdVolume {
            geometry: *v.geometry(),
            voxels: Voxels::UChar(v.labels().to_vec()),
        }
    }
}

fn unsupported(field: &str, value: &str) -> Error {
    Error::UnsupportedNrrd {
        field: field.to_string(),
        value: value.to_string(),
    }
}

fn parse_triplet<T: std::str::FromStr>(field: &str, value: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(unsupported(field, value));
    }
    let parse = |s: &str| s.parse::<T>().map_err(|_| Error::MalformedNrrd(format!("{field}: cannot parse `{s}`")));
    Ok([parse(parts[0])?, parse(parts[1])?, parse(parts[2])?])
}

/// Spacing from a `space directions` value; only axis-aligned diagonal matrices.
fn parse_space_directions(value: &str) -> Result<[f64; 3]> {
    let vectors: Vec<&str> = value.split_whitespace().collect();
    if vectors.len() != 3 {
        return Err(unsupported("space directions", value));
    }
    let mut spacing = [0.0; 3];
    for (axis, v) in vectors.iter().enumerate() {
        let inner = v
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| Error::MalformedNrrd(format!("space directions: `{v}`")))?;
        let comps: Vec<f64> = inner
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::MalformedNrrd(format!("space directions: `{v}`")))?;
        if comps.len() != 3 {
            return Err(unsupported("space directions", value));
        }
        for (j, &c) in comps.iter().enumerate() {
            if j != axis && c != 0.0 {
                return Err(unsupported("space directions", value));
            }
        }
        spacing[axis] = comps[axis].abs();
    }
    Ok(spacing)
}

pub fn decode_nrrd(bytes: &[u8]) -> Result<NrrdVolume> {
    let header_end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::MalformedNrrd("no blank line ending the header".into()))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::MalformedNrrd("header is not UTF-8".into()))?;
    let payload = &bytes[header_end + 2..];

    let mut lines = header.lines();
    let magic = lines.next().unwrap_or("").trim_end_matches('\r');
    if magic != MAGIC {
        if magic.starts_with("NRRD") {
            return Err(unsupported("magic", magic));
        }
        return Err(Error::MalformedNrrd(format!("bad magic `{magic}`")));
    }

    let mut scalar = None;
    let mut dimension = None;
    let mut sizes: Option<[usize; 3]> = None;
    let mut spacing: Option<[f64; 3]> = None;
    let mut endian = None;
    let mut encoding = None;
    for line in lines {
        let line = line.trim_end_matches('\r');
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if line.contains(":=") {
            continue; // key/value comments
        }
        let (field, value) = line
            .split_once(':')
            .ok_or_else(|| Error::MalformedNrrd(format!("line `{line}`")))?;
        let field = field.trim().to_ascii_lowercase();
        let value = value.trim();
        match field.as_str() {
            "type" => {
                scalar = Some(match value {
                    "short" | "short int" | "signed short" | "signed short int" | "int16" | "int16_t" => {
                        ScalarType::Short
                    }
                    "uchar" | "unsigned char" | "uint8" | "uint8_t" => ScalarType::UChar,
                    _ => return Err(unsupported("type", value)),
                })
            }
            "dimension" => {
                if value != "3" {
                    return Err(unsupported("dimension", value));
                }
                dimension = Some(3);
            }
            "sizes" => sizes = Some(parse_triplet("sizes", value)?),
            "spacings" => spacing = Some(parse_triplet("spacings", value)?),
            "space directions" => spacing = Some(parse_space_directions(value)?),
            "endian" => {
                if value != "little" {
                    return Err(unsupported("endian", value));
                }
                endian = Some(());
            }
            "encoding" => {
                if value != "raw" {
                    return Err(unsupported("encoding", value));
                }
                encoding = Some(());
            }
            "byte skip" | "byteskip" | "line skip" | "lineskip" => {
                if value != "0" {
                    return Err(unsupported(&field, value));
                }
            }
            "space" | "space dimension" | "space origin" | "space units" | "kinds" | "content" | "centers"
            | "centerings" | "thicknesses" | "units" | "labels" | "measurement frame" | "old min" | "old max"
            | "oldmin" | "oldmax" => {}
            _ => return Err(unsupported(&field, value)),
        }
    }

    let scalar = scalar.ok_or_else(|| Error::MalformedNrrd("missing `type`".into()))?;
    dimension.ok_or_else(|| Error::MalformedNrrd("missing `dimension`".into()))?;
    let sizes = sizes.ok_or_else(|| Error::MalformedNrrd("missing `sizes`".into()))?;
    encoding.ok_or_else(|| Error::MalformedNrrd("missing `encoding`".into()))?;
    if scalar == ScalarType::Short && endian.is_none() {
        return Err(Error::MalformedNrrd("missing `endian`".into()));
    }
    let geometry = Geometry::new(sizes, spacing.unwrap_or([1.0; 3]))?;

    let expected = geometry.len() * scalar.size();
    if payload.len() != expected {
        return Err(Error::PayloadSize {
            expected,
            found: payload.len(),
        });
    }
    let voxels = match scalar {
        ScalarType::Short => Voxels::Short(
            payload
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]))
                .collect(),
        ),
        ScalarType::UChar => Voxels::UChar(payload.to_vec()),
    };
    Ok(NrrdVolume { geometry, voxels })
}

pub fn encode_nrrd(volume: &NrrdVolume) -> Vec<u8> {
    let scalar = match volume.voxels {
        Voxels::Short(_) => ScalarType::Short,
        Voxels::UChar(_) => ScalarType::UChar,
    };
    let [nx, ny, nz] = volume.geometry.dims;
    let [sx, sy, sz] = volume.geometry.spacing_mm;
    let mut out = Vec::new();
    write!(
        out,
        "{MAGIC}\ntype: {}\ndimension: 3\nsizes: {nx} {ny} {nz}\nspacings: {sx} {sy} {sz}\nendian: little\nencoding: raw\n\n",
        scalar.name()
    )
    .unwrap();
    match &volume.voxels {
        Voxels::Short(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        Voxels::UChar(v) => out.extend_from_slice(v),
    }
    out
}

pub fn read_nrrd(path: &Path) -> Result<NrrdVolume> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_nrrd(&bytes)
}

pub fn write_nrrd(volume: impl Into<NrrdVolume>, path: &Path) -> Result<()> {
    let bytes = encode_nrrd(&volume.into());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom(dims: [usize; 3]) -> Geometry {
        Geometry::new(dims, [0.5, 0.5, 2.0]).unwrap()
    }

    #[test]
    fn short_payload_size() {
        let v = HounsfieldVolume::new(geom([2, 2, 2]), vec![-1000, 0, 20, 40, 100, 3071, -1024, 5]).unwrap();
        let bytes = encode_nrrd(&(&v).into());
        let header_end = bytes.windows(2).position(|w| w == b"\n\n").unwrap() + 2;
        assert_eq!(bytes.len() - header_end, 16);
        let back = decode_nrrd(&bytes).unwrap().into_hounsfield().unwrap();
        assert_eq!(back, v);
        assert_eq!(back.spacing(), [0.5, 0.5, 2.0]);
    }

    #[test]
    fn uchar_payload_size() {
        let l = LabelVolume::new(geom([3, 2, 2]), vec![0, 1, 2, 0, 0, 0, 1, 1, 2, 2, 0, 0]).unwrap();
        let bytes = encode_nrrd(&(&l).into());
        let header_end = bytes.windows(2).position(|w| w == b"\n\n").unwrap() + 2;
        assert_eq!(bytes.len() - header_end, 12);
        assert_eq!(decode_nrrd(&bytes).unwrap().into_labels().unwrap(), l);
    }

    #[test]
    fn payload_mismatch() {
        let mut bytes = b"NRRD0004\ntype: uchar\ndimension: 3\nsizes: 4 4 4\nencoding: raw\n\n".to_vec();
        bytes.extend(std::iter::repeat(0u8).take(100));
        assert!(matches!(
            decode_nrrd(&bytes),
            Err(Error::PayloadSize { expected: 64, found: 100 })
        ));
    }

    #[test]
    fn gzip_refused() {
        let bytes = b"NRRD0004\ntype: short\ndimension: 3\nsizes: 1 1 1\nendian: little\nencoding: gzip\n\nxx";
        match decode_nrrd(bytes) {
            Err(Error::UnsupportedNrrd { field, .. }) => assert_eq!(field, "encoding"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn other_refusals_name_the_field() {
        let cases = [
            ("type: float", "type"),
            ("dimension: 2", "dimension"),
            ("endian: big", "endian"),
            ("data file: x.raw", "data file"),
            ("space directions: (1,0,0) (0.1,1,0) (0,0,1)", "space directions"),
        ];
        for (line, field) in cases {
            let text = format!("NRRD0004\n{line}\ntype: short\ndimension: 3\nsizes: 1 1 1\nendian: little\nencoding: raw\n\n\0\0");
            match decode_nrrd(text.as_bytes()) {
                Err(Error::UnsupportedNrrd { field: f, .. }) => assert_eq!(f, field, "{line}"),
                other => panic!("{line}: {other:?}"),
            }
        }
    }

    #[test]
    fn diagonal_space_directions() {
        let text = "NRRD0004\ntype: short\ndimension: 3\nspace: left-posterior-superior\nsizes: 1 1 1\nspace directions: (-0.5,0,0) (0,0.5,0) (0,0,3)\nendian: little\nencoding: raw\n\n\x10\x00";
        let v = decode_nrrd(text.as_bytes()).unwrap();
        assert_eq!(v.geometry.spacing_mm, [0.5, 0.5, 3.0]);
        assert_eq!(v.voxels, Voxels::Short(vec![16]));
    }

    proptest! {
        #[test]
        fn roundtrip_random_int16(data in proptest::collection::vec(-1024i16..=3071, 8 * 8 * 4),
                                   sx in 0.1f64..5.0, sz in 0.5f64..6.0) {
            let g = Geometry::new([8, 8, 4], [sx, sx, sz]).unwrap();
            let v = HounsfieldVolume::new(g, data).unwrap();
            let back = decode_nrrd(&encode_nrrd(&(&v).into())).unwrap().into_hounsfield().unwrap();
            prop_assert_eq!(back, v);
        }
    }
}
