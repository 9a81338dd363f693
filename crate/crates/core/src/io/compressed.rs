use half::f16;

use crate::error::{Error, Result};
use crate::math::Real;
use crate::model::{GaussianCloud, ShDegree, SH_REST_PER_CHANNEL};

pub const CONTAINER_MAGIC: &[u8; 4] = b"SPWK";
pub const CONTAINER_VERSION: u16 = 1;

/// Fixed header: magic, version, level, degree, count.
const HEADER_LEN: usize = 4 + 2 + 1 + 1 + 8;
/// Quantized ranges: (min, max) as f32 for each of the six arrays.
const RANGES_LEN: usize = 6 * 2 * 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CompressionLevel {
    /// 32-bit floats, PLY column set.
    Lossless,
    /// 16-bit floats, PLY column set.
    Half,
    /// 16-bit position, scale, rotation, opacity and DC; 8-bit SH rest.
    Quantized,
}

impl CompressionLevel {
    pub const ALL: [CompressionLevel; 3] = [
        CompressionLevel::Lossless,
        CompressionLevel::Half,
        CompressionLevel::Quantized,
    ];

    fn tag(self) -> u8 {
        match self {
            CompressionLevel::Lossless => 0,
            CompressionLevel::Half => 1,
            CompressionLevel::Quantized => 2,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        Ok(match t {
            0 => CompressionLevel::Lossless,
            1 => CompressionLevel::Half,
            2 => CompressionLevel::Quantized,
            _ => return Err(Error::Container(format!("unknown level tag {t}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            CompressionLevel::Lossless => "lossless",
            CompressionLevel::Half => "half",
            CompressionLevel::Quantized => "quantized",
        }
    }

    pub fn bytes_per_splat(self, degree: ShDegree) -> usize {
        let rest = 3 * degree.rest_per_channel();
        match self {
            CompressionLevel::Lossless => 4 * (17 + rest),
            CompressionLevel::Half => 2 * (17 + rest),
            CompressionLevel::Quantized => 2 * 14 + rest,
        }
    }
}

impl std::str::FromStr for CompressionLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CompressionLevel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown compression level `{s}`")))
    }
}

impl std::fmt::Display for CompressionLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Payload bytes, excluding the container header and ranges.
pub fn size_estimate(count: u64, degree: ShDegree, level: CompressionLevel) -> u64 {
    count * level.bytes_per_splat(degree) as u64
}

/// The six arrays as f32 columns, in payload order: positions, normals
/// (zero, float levels only), DC, rest up to `degree`, opacity, scales,
/// rotations.
struct Columns {
    positions: Vec<f32>,
    dc: Vec<f32>,
    rest: Vec<f32>,
    opacity: Vec<f32>,
    scales: Vec<f32>,
    rotations: Vec<f32>,
}

fn columns<T: Real>(cloud: &GaussianCloud<T>) -> Columns {
    let d = cloud.sh_degree.rest_per_channel();
    let f = |v: &T| v.as_f32();
    let mut rest = Vec::with_capacity(cloud.len() * 3 * d);
    for r in &cloud.sh_rest {
        for ch in 0..3 {
            rest.extend(r[ch * SH_REST_PER_CHANNEL..ch * SH_REST_PER_CHANNEL + d].iter().map(f));
        }
    }
    Columns {
        positions: cloud.positions.as_flattened().iter().map(f).collect(),
        dc: cloud.sh_dc.as_flattened().iter().map(f).collect(),
        rest,
        opacity: cloud.raw_opacities.iter().map(f).collect(),
        scales: cloud.log_scales.as_flattened().iter().map(f).collect(),
        rotations: cloud.rotations.as_flattened().iter().map(f).collect(),
    }
}

fn range(v: &[f32]) -> (f32, f32) {
    v.iter()
        .fold(None, |acc: Option<(f32, f32)>, &x| match acc {
            None => Some((x, x)),
            Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
        })
        .unwrap_or((0.0, 0.0))
}

fn quantize(v: f32, (lo, hi): (f32, f32), levels: f64) -> u32 {
    let span = hi as f64 - lo as f64;
    if span <= 0.0 {
        return 0;
    }
    (((v as f64 - lo as f64) / span) * levels).round().clamp(0.0, levels) as u32
}

fn dequantize(q: u32, (lo, hi): (f32, f32), levels: f64) -> f32 {
    let span = hi as f64 - lo as f64;
    (lo as f64 + span * (q as f64 / levels)) as f32
}

/// Encodes `cloud` into the container at `level`.
pub fn export_compressed<T: Real>(cloud: &GaussianCloud<T>, level: CompressionLevel) -> Result<Vec<u8>> {
    cloud.check_consistent()?;
    if !cloud.is_finite() {
        return Err(Error::Container("cloud has non-finite parameters".into()));
    }
    let cols = columns(cloud);
    let n = cloud.len();
    let mut out = Vec::with_capacity(
        HEADER_LEN + RANGES_LEN + size_estimate(n as u64, cloud.sh_degree, level) as usize,
    );
    out.extend_from_slice(CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.push(level.tag());
    out.push(cloud.sh_degree.get() as u8);
    out.extend_from_slice(&(n as u64).to_le_bytes());

    let arrays: [&[f32]; 6] = [
        &cols.positions,
        &cols.dc,
        &cols.rest,
        &cols.opacity,
        &cols.scales,
        &cols.rotations,
    ];
    match level {
        CompressionLevel::Lossless | CompressionLevel::Half => {
            let normals = vec![0.0f32; 3 * n];
            let ordered: [&[f32]; 7] = [
                arrays[0], &normals, arrays[1], arrays[2], arrays[3], arrays[4], arrays[5],
            ];
            for a in ordered {
                for &v in a {
                    if level == CompressionLevel::Lossless {
                        out.extend_from_slice(&v.to_le_bytes());
                    } else {
                        let h = f16::from_f32(v);
                        if h.is_infinite() {
                            return Err(Error::Container(format!(
                                "value {v} exceeds the half-precision range"
                            )));
                        }
                        out.extend_from_slice(&h.to_le_bytes());
                    }
                }
            }
        }
        CompressionLevel::Quantized => {
            let ranges = arrays.map(range);
            for (lo, hi) in ranges {
                out.extend_from_slice(&lo.to_le_bytes());
                out.extend_from_slice(&hi.to_le_bytes());
            }
            for (k, a) in arrays.iter().enumerate() {
                let eight_bit = k == 2;
                for &v in a.iter() {
                    if eight_bit {
                        out.push(quantize(v, ranges[k], 255.0) as u8);
                    } else {
                        out.extend_from_slice(&(quantize(v, ranges[k], 65535.0) as u16).to_le_bytes());
                    }
                }
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Container(format!(
                "truncated: need {n} bytes at offset {}, have {}",
                self.at,
                self.bytes.len() - self.at
            )));
        };
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn halves(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(2 * n)?
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect())
    }
}

/// Decodes a container produced by [`export_compressed`].
pub fn decode(bytes: &[u8]) -> Result<GaussianCloud<f32>> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != CONTAINER_MAGIC {
        return Err(Error::Container("bad magic".into()));
    }
    let h = r.take(2)?;
    let version = u16::from_le_bytes([h[0], h[1]]);
    if version != CONTAINER_VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    let level = CompressionLevel::from_tag(r.take(1)?[0])?;
    let degree = ShDegree::new(r.take(1)?[0] as u32)
        .map_err(|e| Error::Container(e.to_string()))?;
    let c = r.take(8)?;
    let n = u64::from_le_bytes(c.try_into().expect("8 bytes"));
    let n = usize::try_from(n).map_err(|_| Error::Container("count overflows".into()))?;
    let d = degree.rest_per_channel();
    let lens = [3 * n, 3 * n, 3 * d * n, n, 3 * n, 4 * n];

    let arrays: Vec<Vec<f32>> = match level {
        CompressionLevel::Lossless | CompressionLevel::Half => {
            let read = |r: &mut Reader, len| {
                if level == CompressionLevel::Lossless {
                    r.f32s(len)
                } else {
                    r.halves(len)
                }
            };
            let mut v = Vec::with_capacity(6);
            v.push(read(&mut r, lens[0])?);
            read(&mut r, 3 * n)?; // normals
            for &len in &lens[1..] {
                v.push(read(&mut r, len)?);
            }
            v
        }
        CompressionLevel::Quantized => {
            let raw = r.f32s(12)?;
            let ranges: Vec<(f32, f32)> = raw.chunks_exact(2).map(|p| (p[0], p[1])).collect();
            let mut v = Vec::with_capacity(6);
            for (k, &len) in lens.iter().enumerate() {
                if k == 2 {
                    v.push(r.take(len)?.iter().map(|&q| dequantize(q as u32, ranges[k], 255.0)).collect());
                } else {
                    v.push(
                        r.take(2 * len)?
                            .chunks_exact(2)
                            .map(|c| dequantize(u16::from_le_bytes([c[0], c[1]]) as u32, ranges[k], 65535.0))
                            .collect(),
                    );
                }
            }
            v
        }
    };
    if r.at != bytes.len() {
        return Err(Error::Container(format!(
            "{} trailing bytes",
            bytes.len() - r.at
        )));
    }

    let mut cloud = GaussianCloud::zeros(n);
    cloud.sh_degree = degree;
    cloud.positions.as_flattened_mut().copy_from_slice(&arrays[0]);
    cloud.sh_dc.as_flattened_mut().copy_from_slice(&arrays[1]);
    for (i, rest) in cloud.sh_rest.iter_mut().enumerate() {
        for ch in 0..3 {
            let src = &arrays[2][(i * 3 + ch) * d..(i * 3 + ch + 1) * d];
            rest[ch * SH_REST_PER_CHANNEL..ch * SH_REST_PER_CHANNEL + d].copy_from_slice(src);
        }
    }
    cloud.raw_opacities.copy_from_slice(&arrays[3]);
    cloud.log_scales.as_flattened_mut().copy_from_slice(&arrays[4]);
    cloud.rotations.as_flattened_mut().copy_from_slice(&arrays[5]);
    Ok(cloud)
}
