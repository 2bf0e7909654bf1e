//! Multiband rasters, score maps, masks and plain numeric CSV.
//!
//! Native raster layout (`.mbrs`, all integers and doubles little-endian):
//!
//! ```text
//! "MBRS"  u8 version=1  u32 width  u32 height  u32 bands
//! u8 has_nodata  [f64 nodata]  f64 × (bands·height·width), band-sequential
//! ```
//!
//! Band names, when present, live in a JSON sidecar `<path>.json`.
//! Masks are single-band rasters holding 0/1.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, FormatError, Result};
use crate::evaluation::LabelMask;
use crate::numerics::DataMatrix;

pub const RASTER_MAGIC: [u8; 4] = *b"MBRS";
pub const RASTER_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    bands: usize,
    values: Vec<f64>,
    nodata: Option<f64>,
    band_names: Option<Vec<String>>,
}

#[inline]
fn matches_nodata(v: f64, nodata: Option<f64>) -> bool {
    match nodata {
        Some(nd) if nd.is_nan() => v.is_nan(),
        Some(nd) => v == nd,
        None => false,
    }
}

impl RasterImage {
    pub fn new(
        width: usize,
        height: usize,
        bands: usize,
        values: Vec<f64>,
        nodata: Option<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::Domain("raster dimensions must be positive".into()));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|p| p.checked_mul(bands))
            .ok_or_else(|| FormatError::DimensionOverflow(format!("{width}x{height}x{bands}")))?;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        if let Some(pos) = values
            .iter()
            .position(|&v| !v.is_finite() && !matches_nodata(v, nodata))
        {
            return Err(Error::Domain(format!(
                "non-finite raster value at index {pos}"
            )));
        }
        Ok(Self {
            width,
            height,
            bands,
            values,
            nodata,
            band_names: None,
        })
    }

    pub fn with_band_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.bands {
            return Err(Error::DimensionMismatch {
                expected: self.bands,
                got: names.len(),
            });
        }
        self.band_names = Some(names);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn nodata(&self) -> Option<f64> {
        self.nodata
    }

    pub fn band_names(&self) -> Option<&[String]> {
        self.band_names.as_deref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, band: usize, row: usize, col: usize) -> f64 {
        self.values[band * self.pixels() + row * self.width + col]
    }

    /// A pixel is undefined when any of its bands holds the nodata value.
    pub fn is_nodata(&self, row: usize, col: usize) -> bool {
        self.nodata.is_some()
            && (0..self.bands).any(|b| matches_nodata(self.get(b, row, col), self.nodata))
    }

    /// Defined pixels as rows of a sample matrix, in row-major scan order,
    /// plus the `(row, col)` of each sample.
    pub fn flatten_to_matrix(&self) -> Result<(DataMatrix, Vec<(usize, usize)>)> {
        let mut values = Vec::with_capacity(self.values.len());
        let mut index = Vec::with_capacity(self.pixels());
        for r in 0..self.height {
            for c in 0..self.width {
                if self.is_nodata(r, c) {
                    continue;
                }
                index.push((r, c));
                values.extend((0..self.bands).map(|b| self.get(b, r, c)));
            }
        }
        if index.is_empty() {
            return Err(Error::Degenerate("raster has no defined pixels".into()));
        }
        Ok((DataMatrix::new(index.len(), self.bands, values)?, index))
    }

    /// Inverse of [`flatten_to_matrix`](Self::flatten_to_matrix): pixels not in
    /// `index` are filled with `nodata` (NaN when `None`).
    pub fn unflatten(
        x: &DataMatrix,
        index: &[(usize, usize)],
        width: usize,
        height: usize,
        nodata: Option<f64>,
    ) -> Result<Self> {
        if index.len() != x.rows() {
            return Err(Error::DimensionMismatch {
                expected: x.rows(),
                got: index.len(),
            });
        }
        let bands = x.cols();
        let fill = nodata.unwrap_or(f64::NAN);
        let mut values = vec![fill; width * height * bands];
        for (i, &(r, c)) in index.iter().enumerate() {
            if r >= height || c >= width {
                return Err(Error::Domain(format!("pixel ({r}, {c}) outside raster")));
            }
            for (b, &v) in x.row(i).iter().enumerate() {
                values[b * width * height + r * width + c] = v;
            }
        }
        let has_gaps = index.len() < width * height;
        let nodata = if has_gaps { Some(fill) } else { nodata };
        Self::new(width, height, bands, values, nodata)
    }

    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&RASTER_MAGIC);
        w.u8(RASTER_VERSION);
        w.u32(self.width as u32);
        w.u32(self.height as u32);
        w.u32(self.bands as u32);
        match self.nodata {
            Some(nd) => {
                w.u8(1);
                w.f64(nd);
            }
            None => w.u8(0),
        }
        w.raw_f64s(&self.values);
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(RASTER_MAGIC)?;
        let version = r.u8()?;
        if version != RASTER_VERSION {
            return Err(FormatError::UnsupportedVersion(u32::from(version)).into());
        }
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        let bands = r.u32()? as usize;
        let nodata = match r.u8()? {
            0 => None,
            1 => Some(r.f64()?),
            f => return Err(FormatError::InvalidField(format!("nodata flag {f}")).into()),
        };
        let count = width
            .checked_mul(height)
            .and_then(|p| p.checked_mul(bands))
            .and_then(|c| c.checked_mul(8).map(|_| c))
            .ok_or_else(|| FormatError::DimensionOverflow(format!("{width}x{height}x{bands}")))?;
        let payload = r.remaining() as u64;
        if payload != count as u64 * 8 {
            return Err(FormatError::TruncatedPayload {
                expected: count as u64 * 8,
                found: payload,
            }
            .into());
        }
        let values = r.raw_f64s(count)?;
        r.finish()?;
        Self::new(width, height, bands, values, nodata).map_err(|e| match e {
            Error::Domain(m) => FormatError::InvalidField(m).into(),
            other => other,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct RasterSidecar {
    band_names: Vec<String>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_raster(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, img.encode())?;
    if let Some(names) = &img.band_names {
        let sidecar = RasterSidecar {
            band_names: names.clone(),
        };
        fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar)?)?;
    }
    Ok(())
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let img = RasterImage::decode(&fs::read(path)?)?;
    let side = sidecar_path(path);
    if side.exists() {
        let sidecar: RasterSidecar = serde_json::from_slice(&fs::read(side)?)?;
        return img.with_band_names(sidecar.band_names);
    }
    Ok(img)
}

/// Per-pixel scores laid out like the source raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub width: usize,
    pub height: usize,
    pub scores: Vec<f64>,
    /// `false` where the source pixel was nodata.
    pub scored: Vec<bool>,
}

impl ScoreMap {
    pub fn from_scores(
        scores: &[f64],
        index: &[(usize, usize)],
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if scores.len() != index.len() {
            return Err(Error::DimensionMismatch {
                expected: index.len(),
                got: scores.len(),
            });
        }
        let mut map = Self {
            width,
            height,
            scores: vec![f64::NAN; width * height],
            scored: vec![false; width * height],
        };
        for (&s, &(r, c)) in scores.iter().zip(index) {
            map.scores[r * width + c] = s;
            map.scored[r * width + c] = true;
        }
        Ok(map)
    }

    /// Single-band raster with NaN nodata for unscored pixels.
    pub fn to_raster(&self) -> Result<RasterImage> {
        let nodata = if self.scored.iter().all(|&s| s) {
            None
        } else {
            Some(f64::NAN)
        };
        RasterImage::new(self.width, self.height, 1, self.scores.clone(), nodata)
    }

    pub fn from_raster(img: &RasterImage) -> Result<Self> {
        if img.bands() != 1 {
            return Err(Error::Domain(format!(
                "score map must have one band, found {}",
                img.bands()
            )));
        }
        let scored = (0..img.height())
            .flat_map(|r| (0..img.width()).map(move |c| (r, c)))
            .map(|(r, c)| !img.is_nodata(r, c))
            .collect();
        Ok(Self {
            width: img.width(),
            height: img.height(),
            scores: img.values().to_vec(),
            scored,
        })
    }
}

/// Reads a 0/1 mask raster and checks it against the paired raster geometry.
/// Any nonzero value is a positive label.
pub fn read_mask(path: impl AsRef<Path>, width: usize, height: usize) -> Result<LabelMask> {
    let img = read_raster(path)?;
    if img.width() != width || img.height() != height || img.bands() != 1 {
        return Err(Error::Domain(format!(
            "mask is {}x{}x{}, expected {width}x{height}x1",
            img.width(),
            img.height(),
            img.bands()
        )));
    }
    Ok(LabelMask::from_values(img.values()))
}

pub fn write_mask(
    mask: &LabelMask,
    width: usize,
    height: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let values = mask
        .labels()
        .iter()
        .map(|&l| if l { 1.0 } else { 0.0 })
        .collect();
    write_raster(&RasterImage::new(width, height, 1, values, None)?, path)
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads a numeric CSV with a header row. Returns the header and the matrix.
pub fn read_csv_with_header(path: impl AsRef<Path>) -> Result<(Vec<String>, DataMatrix)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(csv_error)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(parse_error(1, "missing header row"));
    }
    let cols = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != cols {
            return Err(parse_error(
                line,
                format!("expected {cols} fields, found {}", record.len()),
            ));
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(line, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_error(line, format!("non-finite value: {field:?}")));
            }
            values.push(v);
        }
        rows += 1;
    }
    Ok((header, DataMatrix::new(rows, cols, values)?))
}

pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<DataMatrix> {
    Ok(read_csv_with_header(path)?.1)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_error(line, format!("{other:?}")),
    }
}

/// Writes a CSV with a header row; numbers use the shortest representation
/// that parses back to the identical double.
pub fn write_csv_matrix(
    path: impl AsRef<Path>,
    x: &DataMatrix,
    header: Option<&[String]>,
) -> Result<()> {
    let default_header: Vec<String>;
    let header = match header {
        Some(h) => {
            if h.len() != x.cols() {
                return Err(Error::DimensionMismatch {
                    expected: x.cols(),
                    got: h.len(),
                });
            }
            h
        }
        None => {
            default_header = (0..x.cols()).map(|j| format!("x{j}")).collect();
            &default_header
        }
    };
    let mut out = String::with_capacity(x.as_slice().len() * 20);
    out.push_str(&header.join(","));
    out.push('\n');
    for row in x.iter_rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Single-column CSV.
pub fn write_csv_column(path: impl AsRef<Path>, name: &str, values: &[f64]) -> Result<()> {
    let x = DataMatrix::new(values.len(), 1, values.to_vec())?;
    write_csv_matrix(path, &x, Some(&[name.to_owned()]))
}

/// Reads labels from a single-column CSV; nonzero means positive.
pub fn read_csv_labels(path: impl AsRef<Path>) -> Result<LabelMask> {
    let x = read_csv_matrix(path)?;
    if x.cols() != 1 {
        return Err(parse_error(
            1,
            format!("expected one label column, found {}", x.cols()),
        ));
    }
    Ok(LabelMask::from_values(x.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn zero_image_round_trips_bit_exactly() {
        let dir = tmp();
        let p = dir.path().join("z.mbrs");
        let img = RasterImage::new(2, 2, 1, vec![0.0; 4], None).unwrap();
        write_raster(&img, &p).unwrap();
        assert_eq!(read_raster(&p).unwrap(), img);
    }

    #[test]
    fn header_and_band_names_round_trip() {
        let dir = tmp();
        let p = dir.path().join("a.mbrs");
        let values: Vec<f64> = (0..24).map(|i| i as f64 * 0.1 - 1.0).collect();
        let img = RasterImage::new(3, 4, 2, values, Some(-9999.0))
            .unwrap()
            .with_band_names(vec!["red".into(), "nir".into()])
            .unwrap();
        write_raster(&img, &p).unwrap();
        let back = read_raster(&p).unwrap();
        assert_eq!(back, img);
        assert!(back
            .values()
            .iter()
            .zip(img.values())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_payload_is_reported() {
        let dir = tmp();
        let p = dir.path().join("t.mbrs");
        let img = RasterImage::new(2, 2, 1, vec![1.0; 4], None).unwrap();
        let mut bytes = img.encode();
        bytes.truncate(bytes.len() - 8);
        fs::write(&p, &bytes).unwrap();
        let err = read_raster(&p).unwrap_err();
        assert!(matches!(
            err,
            Error::Format(FormatError::TruncatedPayload {
                expected: 32,
                found: 24
            })
        ));
    }

    #[test]
    fn bad_magic_is_reported() {
        let dir = tmp();
        let p = dir.path().join("m.mbrs");
        fs::write(&p, b"NOPE\x01").unwrap();
        assert!(matches!(
            read_raster(&p).unwrap_err(),
            Error::Format(FormatError::BadMagic { .. })
        ));
    }

    #[test]
    fn overflowing_dimensions_are_rejected() {
        let mut w = Writer::new();
        w.bytes(&RASTER_MAGIC);
        w.u8(1);
        w.u32(u32::MAX);
        w.u32(u32::MAX);
        w.u32(u32::MAX);
        w.u8(0);
        let err = RasterImage::decode(&w.finish()).unwrap_err();
        assert!(matches!(
            err,
            Error::Format(FormatError::DimensionOverflow(_) | FormatError::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn flatten_scan_order() {
        let values: Vec<f64> = (0..6).map(f64::from).collect();
        let img = RasterImage::new(3, 2, 1, values, None).unwrap();
        let (x, idx) = img.flatten_to_matrix().unwrap();
        assert_eq!(x.rows(), 6);
        assert_eq!(x.as_slice(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(idx[4], (1, 1));
    }

    #[test]
    fn nodata_pixel_is_skipped_and_restored() {
        let nd = -1.0;
        // 2 bands, 3x3; centre pixel nodata in band 1 only
        let mut values: Vec<f64> = (0..18).map(f64::from).collect();
        values[9 + 4] = nd;
        let img = RasterImage::new(3, 3, 2, values, Some(nd)).unwrap();
        let (x, idx) = img.flatten_to_matrix().unwrap();
        assert_eq!(x.rows(), 8);
        assert!(!idx.contains(&(1, 1)));
        let back = RasterImage::unflatten(&x, &idx, 3, 3, Some(nd)).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                if (r, c) == (1, 1) {
                    assert!(back.is_nodata(1, 1));
                    continue;
                }
                for b in 0..2 {
                    assert_eq!(back.get(b, r, c), img.get(b, r, c));
                }
            }
        }
    }

    #[test]
    fn all_nodata_image_cannot_be_flattened() {
        let img = RasterImage::new(2, 1, 1, vec![f64::NAN; 2], Some(f64::NAN)).unwrap();
        assert!(matches!(img.flatten_to_matrix(), Err(Error::Degenerate(_))));
    }

    #[test]
    fn mask_round_trip_and_mismatch() {
        let dir = tmp();
        let p = dir.path().join("mask.mbrs");
        let mask = LabelMask::new(vec![true, false, false, true]);
        write_mask(&mask, 2, 2, &p).unwrap();
        assert_eq!(read_mask(&p, 2, 2).unwrap(), mask);
        assert!(read_mask(&p, 4, 1).is_err());
    }

    #[test]
    fn all_zero_mask_loads() {
        let dir = tmp();
        let p = dir.path().join("zero.mbrs");
        write_mask(&LabelMask::new(vec![false; 4]), 2, 2, &p).unwrap();
        let m = read_mask(&p, 2, 2).unwrap();
        assert_eq!(m.positive_count(), 0);
    }

    #[test]
    fn csv_single_value_round_trip() {
        let dir = tmp();
        let p = dir.path().join("one.csv");
        let x = DataMatrix::new(1, 1, vec![0.1 + 0.2]).unwrap();
        write_csv_matrix(&p, &x, None).unwrap();
        assert_eq!(read_csv_matrix(&p).unwrap(), x);
    }

    #[test]
    fn csv_extreme_values_round_trip() {
        let dir = tmp();
        let p = dir.path().join("ext.csv");
        let vals = vec![
            1e-300,
            -2.5e300,
            std::f64::consts::PI,
            -0.0,
            123456789.12345679,
            5e-324,
        ];
        let x = DataMatrix::new(2, 3, vals).unwrap();
        write_csv_matrix(&p, &x, None).unwrap();
        let back = read_csv_matrix(&p).unwrap();
        for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_ragged_row_reports_line() {
        let dir = tmp();
        let p = dir.path().join("ragged.csv");
        fs::write(&p, "a,b\n1,2\n3,4\n5\n").unwrap();
        match read_csv_matrix(&p).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn csv_non_numeric_reports_line() {
        let dir = tmp();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "a\n1\nfoo\n").unwrap();
        match read_csv_matrix(&p).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn csv_scientific_notation_parses() {
        let dir = tmp();
        let p = dir.path().join("sci.csv");
        fs::write(&p, "a,b\n1e-3,-2.5E+2\n").unwrap();
        assert_eq!(read_csv_matrix(&p).unwrap().as_slice(), &[1e-3, -250.0]);
    }

    #[test]
    fn score_map_raster_round_trip() {
        let idx = vec![(0, 0), (0, 1), (1, 1)];
        let map = ScoreMap::from_scores(&[1.0, 2.0, 3.0], &idx, 2, 2).unwrap();
        let img = map.to_raster().unwrap();
        let back = ScoreMap::from_raster(&img).unwrap();
        assert_eq!(back.scored, vec![true, true, false, true]);
        assert_eq!(back.scores[3], 3.0);
    }
}
