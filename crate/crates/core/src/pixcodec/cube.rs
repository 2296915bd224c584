use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mono12p::{pack_mono12p, unpack_mono12p, u16_from_le_bytes, u16_to_le_bytes, Mono12pBuffer};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "RGB")]
    Rgb,
    #[serde(rename = "HSI")]
    Hsi,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Hsi => "hsi",
        }
    }
}

/// `H × W × C` intensity volume, row-major with the channel index fastest.
///
/// Raw cubes hold integer counts below `2^bit_depth`. Reflectance cubes
/// (`reflectance == true`) hold corrected real values and keep the bit depth
/// of the frame they came from as provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCube {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub bit_depth: u8,
    pub modality: Modality,
    pub reflectance: bool,
    pub data: Vec<f32>,
}

impl ImageCube {
    pub fn zeros(height: usize, width: usize, channels: usize, bit_depth: u8, modality: Modality) -> Self {
        Self {
            height,
            width,
            channels,
            bit_depth,
            modality,
            reflectance: false,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_data(
        height: usize,
        width: usize,
        channels: usize,
        bit_depth: u8,
        modality: Modality,
        data: Vec<f32>,
    ) -> Result<Self> {
        let cube = Self {
            height,
            width,
            channels,
            bit_depth,
            modality,
            reflectance: false,
            data,
        };
        cube.validate()?;
        Ok(cube)
    }

    /// Same geometry and metadata, new sample values.
    pub fn with_data(&self, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            data,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            bit_depth: self.bit_depth,
            modality: self.modality,
            reflectance: self.reflectance,
            data: Vec::new(),
        }
    }

    pub fn max_value(&self) -> f32 {
        ((1u32 << self.bit_depth) - 1) as f32
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::Invalid(format!(
                "cube dimensions must be positive, got {}x{}x{}",
                self.height, self.width, self.channels
            )));
        }
        if !matches!(self.bit_depth, 8 | 12) {
            return Err(Error::Format(format!("unknown bit depth {}", self.bit_depth)));
        }
        let n = self.height * self.width * self.channels;
        if self.data.len() != n {
            return Err(Error::Format(format!(
                "cube data holds {} samples, dimensions need {n}",
                self.data.len()
            )));
        }
        if self.reflectance {
            if let Some(k) = self.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("non-finite reflectance at sample {k}")));
            }
        } else {
            let max = self.max_value();
            if let Some(k) = self
                .data
                .iter()
                .position(|&v| !(0.0..=max).contains(&v) || v.fract() != 0.0)
            {
                return Err(Error::Invalid(format!(
                    "sample {k} = {} is not a {}-bit count",
                    self.data[k], self.bit_depth
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[self.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f32) {
        let k = self.index(row, col, ch);
        self.data[k] = v;
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let k = self.index(row, col, 0);
        &self.data[k..k + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let k = self.index(row, col, 0);
        &mut self.data[k..k + self.channels]
    }

    /// Copy of the rectangle `rows × cols` (half-open ranges).
    pub fn crop(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Result<Self> {
        if rows.end > self.height || cols.end > self.width || rows.is_empty() || cols.is_empty() {
            return Err(Error::InvalidGeometry(format!(
                "crop {rows:?} x {cols:?} outside {}x{}",
                self.height, self.width
            )));
        }
        let mut out = Self {
            height: rows.len(),
            width: cols.len(),
            ..self.clone_meta()
        };
        out.data.reserve(out.height * out.width * out.channels);
        for r in rows {
            let start = self.index(r, cols.start, 0);
            let end = self.index(r, cols.end - 1, 0) + self.channels;
            out.data.extend_from_slice(&self.data[start..end]);
        }
        Ok(out)
    }

    fn integer_samples(&self) -> Result<Vec<u16>> {
        self.validate()?;
        Ok(self.data.iter().map(|&v| v as u16).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Packing {
    Mono12p,
    U8,
    U16,
    F32,
}

impl Packing {
    fn extension(self) -> &'static str {
        match self {
            Packing::Mono12p => "mono12p",
            Packing::U8 => "u8",
            Packing::U16 => "u16",
            Packing::F32 => "f32",
        }
    }

    /// Default packing: reflectance as f32, 12-bit as mono12p, 8-bit as bytes.
    pub fn for_cube(cube: &ImageCube) -> Packing {
        if cube.reflectance {
            Packing::F32
        } else if cube.bit_depth == 12 {
            Packing::Mono12p
        } else {
            Packing::U8
        }
    }
}

/// Sidecar JSON header of a cube container (`<name>.cube.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeHeader {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub bit_depth: u8,
    pub modality: Modality,
    pub payload_file: String,
    pub packing: Packing,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reflectance: bool,
}

fn payload_path(header_path: &Path, payload_file: &str) -> PathBuf {
    header_path
        .parent()
        .map(|d| d.join(payload_file))
        .unwrap_or_else(|| PathBuf::from(payload_file))
}

fn stem_of(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cube".into());
    name.strip_suffix(".cube.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(&name)
        .to_string()
}

pub fn write_cube(cube: &ImageCube, path: &Path) -> Result<CubeHeader> {
    write_cube_with(cube, path, Packing::for_cube(cube))
}

/// Writes header + payload next to each other. The payload is named after
/// the header stem with the packing as extension.
pub fn write_cube_with(cube: &ImageCube, path: &Path, packing: Packing) -> Result<CubeHeader> {
    let payload: Vec<u8> = match (packing, cube.reflectance) {
        (Packing::F32, _) => {
            cube.validate()?;
            cube.data.iter().flat_map(|v| v.to_le_bytes()).collect()
        }
        (_, true) => {
            return Err(Error::Format(format!(
                "reflectance cubes must be stored as f32, not {packing:?}"
            )))
        }
        (Packing::Mono12p, false) => pack_mono12p(&cube.integer_samples()?)?.into_bytes(),
        (Packing::U16, false) => u16_to_le_bytes(&cube.integer_samples()?),
        (Packing::U8, false) => {
            if cube.bit_depth != 8 {
                return Err(Error::Format(format!(
                    "{}-bit cube cannot be stored as u8",
                    cube.bit_depth
                )));
            }
            cube.integer_samples()?.into_iter().map(|v| v as u8).collect()
        }
    };
    let header = CubeHeader {
        height: cube.height,
        width: cube.width,
        channels: cube.channels,
        bit_depth: cube.bit_depth,
        modality: cube.modality,
        payload_file: format!("{}.{}", stem_of(path), packing.extension()),
        packing,
        reflectance: cube.reflectance,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let ppath = payload_path(path, &header.payload_file);
    fs::write(&ppath, payload).map_err(|e| Error::io(&ppath, e))?;
    let text = serde_json::to_string_pretty(&header).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
    Ok(header)
}

pub fn read_cube(path: &Path) -> Result<ImageCube> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: CubeHeader = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    let ppath = payload_path(path, &header.payload_file);
    let bytes = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    decode_payload(&header, bytes)
}

fn decode_payload(h: &CubeHeader, bytes: Vec<u8>) -> Result<ImageCube> {
    if !matches!(h.bit_depth, 8 | 12) {
        return Err(Error::Format(format!("unknown bit depth {}", h.bit_depth)));
    }
    let n = h.height * h.width * h.channels;
    let expected = match h.packing {
        Packing::Mono12p => super::packed_len(n),
        Packing::U8 => n,
        Packing::U16 => 2 * n,
        Packing::F32 => 4 * n,
    };
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload {} has {} bytes, header needs {expected}",
            h.payload_file,
            bytes.len()
        )));
    }
    if h.reflectance != (h.packing == Packing::F32) {
        return Err(Error::Format(
            "reflectance flag and f32 packing must go together".into(),
        ));
    }
    let data: Vec<f32> = match h.packing {
        Packing::Mono12p => unpack_mono12p(&Mono12pBuffer::new(bytes, n)?)
            .into_iter()
            .map(f32::from)
            .collect(),
        Packing::U8 => bytes.into_iter().map(f32::from).collect(),
        Packing::U16 => u16_from_le_bytes(&bytes)?.into_iter().map(f32::from).collect(),
        Packing::F32 => bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect(),
    };
    let cube = ImageCube {
        height: h.height,
        width: h.width,
        channels: h.channels,
        bit_depth: h.bit_depth,
        modality: h.modality,
        reflectance: h.reflectance,
        data,
    };
    cube.validate()?;
    Ok(cube)
}
