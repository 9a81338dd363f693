use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::LazyLock;

use crate::error::{Error, Result};
use crate::math::Real;
use crate::model::{GaussianCloud, ShDegree, SH_REST_LEN};

/// Vertex property names in canonical order.
pub static PLY_PROPERTIES: LazyLock<Vec<String>> = LazyLock::new(|| {
    let mut v: Vec<String> = ["x", "y", "z", "nx", "ny", "nz"].map(String::from).to_vec();
    v.extend((0..3).map(|i| format!("f_dc_{i}")));
    v.extend((0..SH_REST_LEN).map(|i| format!("f_rest_{i}")));
    v.push("opacity".into());
    v.extend((0..3).map(|i| format!("scale_{i}")));
    v.extend((0..4).map(|i| format!("rot_{i}")));
    v
});

const PROPS: usize = 62;

fn header(count: usize) -> String {
    let mut h = format!("ply\nformat binary_little_endian 1.0\nelement vertex {count}\n");
    for p in PLY_PROPERTIES.iter() {
        h.push_str("property float ");
        h.push_str(p);
        h.push('\n');
    }
    h.push_str("end_header\n");
    h
}

fn row<T: Real>(cloud: &GaussianCloud<T>, i: usize) -> [f32; PROPS] {
    let mut r = [0.0f32; PROPS];
    let f = |v: T| v.as_f32();
    r[0..3].copy_from_slice(&cloud.positions[i].map(f));
    r[6..9].copy_from_slice(&cloud.sh_dc[i].map(f));
    r[9..54].copy_from_slice(&cloud.sh_rest[i].map(f));
    r[54] = f(cloud.raw_opacities[i]);
    r[55..58].copy_from_slice(&cloud.log_scales[i].map(f));
    r[58..62].copy_from_slice(&cloud.rotations[i].map(f));
    r
}

/// Writes the binary PLY; returns the number of bytes written.
pub fn write_ply<T: Real, W: Write>(cloud: &GaussianCloud<T>, out: &mut W) -> std::io::Result<u64> {
    let h = header(cloud.len());
    out.write_all(h.as_bytes())?;
    let mut buf = [0u8; PROPS * 4];
    for i in 0..cloud.len() {
        for (chunk, v) in buf.chunks_exact_mut(4).zip(row(cloud, i)) {
            chunk.copy_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok((h.len() + cloud.len() * PROPS * 4) as u64)
}

pub fn export_ply<T: Real>(cloud: &GaussianCloud<T>, path: &Path) -> Result<u64> {
    cloud.check_consistent()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let n = write_ply(cloud, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}

pub fn import_ply(path: &Path) -> Result<GaussianCloud<f32>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_ply(&mut BufReader::new(file)).map_err(|e| match e {
        Error::Ply(m) => Error::Ply(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Ply(msg.into())
}

/// Parses a binary little-endian splat PLY. Properties may appear in any
/// order but the set must be exactly the 62 canonical names.
pub fn read_ply<R: BufRead>(input: &mut R) -> Result<GaussianCloud<f32>> {
    let mut line = String::new();
    let mut next_line = |line: &mut String| -> Result<()> {
        line.clear();
        let n = input
            .read_line(line)
            .map_err(|e| bad(format!("reading header: {e}")))?;
        if n == 0 {
            return Err(bad("unexpected end of header"));
        }
        Ok(())
    };

    next_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(bad("missing `ply` magic"));
    }
    let mut count: Option<usize> = None;
    let mut names: Vec<String> = Vec::new();
    let mut saw_format = false;
    loop {
        next_line(&mut line)?;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some("format") => match words.next() {
                Some("binary_little_endian") => saw_format = true,
                Some(other) => {
                    return Err(bad(format!(
                        "unsupported format `{other}`; only binary_little_endian is read"
                    )))
                }
                None => return Err(bad("format line without a format")),
            },
            Some("element") => {
                let name = words.next().unwrap_or("");
                if name != "vertex" || count.is_some() {
                    return Err(bad(format!("unexpected element `{name}`")));
                }
                let n = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| bad("vertex element without a valid count"))?;
                count = Some(n);
            }
            Some("property") => {
                if count.is_none() {
                    return Err(bad("property before the vertex element"));
                }
                let ty = words.next().unwrap_or("");
                let name = words.next().ok_or_else(|| bad("property without a name"))?;
                if ty != "float" && ty != "float32" {
                    return Err(bad(format!("property `{name}` has type `{ty}`, expected float")));
                }
                if !PLY_PROPERTIES.iter().any(|p| p == name) {
                    return Err(bad(format!("unknown property `{name}`")));
                }
                if names.iter().any(|p| p == name) {
                    return Err(bad(format!("duplicate property `{name}`")));
                }
                names.push(name.to_string());
            }
            Some(other) => return Err(bad(format!("unexpected header keyword `{other}`"))),
        }
    }
    if !saw_format {
        return Err(bad("missing format line"));
    }
    let count = count.ok_or_else(|| bad("missing vertex element"))?;
    if let Some(missing) = PLY_PROPERTIES.iter().find(|p| !names.contains(p)) {
        return Err(Error::MissingProperty(missing.clone()));
    }
    // column[canonical] = position in file
    let column: Vec<usize> = PLY_PROPERTIES
        .iter()
        .map(|p| names.iter().position(|n| n == p).expect("checked above"))
        .collect();

    let mut cloud = GaussianCloud::with_capacity(count);
    cloud.sh_degree = ShDegree::MAX;
    let mut buf = [0u8; PROPS * 4];
    for i in 0..count {
        input
            .read_exact(&mut buf)
            .map_err(|_| bad(format!("payload truncated at vertex {i} of {count}")))?;
        let v = |canonical: usize| {
            let k = column[canonical] * 4;
            f32::from_le_bytes([buf[k], buf[k + 1], buf[k + 2], buf[k + 3]])
        };
        cloud.positions.push([v(0), v(1), v(2)]);
        cloud.sh_dc.push([v(6), v(7), v(8)]);
        cloud.sh_rest.push(std::array::from_fn(|k| v(9 + k)));
        cloud.raw_opacities.push(v(54));
        cloud.log_scales.push([v(55), v(56), v(57)]);
        cloud.rotations.push([v(58), v(59), v(60), v(61)]);
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn cloud(n: usize) -> GaussianCloud<f32> {
        let mut c = GaussianCloud::zeros(n);
        let mut x = 0.1f32;
        for s in c.flat_mut() {
            for v in s {
                x = (x * 7.31 + 0.17).fract();
                *v = x - 0.5;
            }
        }
        c
    }

    fn bytes(c: &GaussianCloud<f32>) -> Vec<u8> {
        let mut out = Vec::new();
        write_ply(c, &mut out).unwrap();
        out
    }

    #[test]
    fn layout_has_62_properties() {
        assert_eq!(PLY_PROPERTIES.len(), 62);
        assert_eq!(PLY_PROPERTIES[9], "f_rest_0");
        assert_eq!(PLY_PROPERTIES[53], "f_rest_44");
    }

    #[test]
    fn round_trip_and_byte_count() {
        let c = cloud(5);
        let b = bytes(&c);
        assert_eq!(b.len(), header(5).len() + 5 * 248);
        let back = read_ply(&mut Cursor::new(b)).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn empty_cloud_is_header_only() {
        let b = bytes(&GaussianCloud::<f32>::zeros(0));
        assert_eq!(b, header(0).as_bytes());
        assert_eq!(read_ply(&mut Cursor::new(b)).unwrap().len(), 0);
    }

    #[test]
    fn rejects_ascii_and_unknown_and_missing() {
        let ascii = header(0).replace("binary_little_endian", "ascii");
        assert!(read_ply(&mut Cursor::new(ascii)).unwrap_err().to_string().contains("ascii"));

        let unknown = header(0).replace("property float nz\n", "property float nz\nproperty float red\n");
        assert!(read_ply(&mut Cursor::new(unknown)).unwrap_err().to_string().contains("red"));

        let missing = header(0).replace("property float f_rest_44\n", "");
        match read_ply(&mut Cursor::new(missing)) {
            Err(Error::MissingProperty(p)) => assert_eq!(p, "f_rest_44"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_payload() {
        let mut b = bytes(&cloud(2));
        b.truncate(b.len() - 3);
        assert!(read_ply(&mut Cursor::new(b)).unwrap_err().to_string().contains("truncated"));
    }
}
