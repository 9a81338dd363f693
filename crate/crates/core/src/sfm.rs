//! Reader and writer for the three-file SfM text interchange
//! (`cameras.txt`, `images.txt`, `points3D.txt`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{mat3_tvec, quat_to_mat, scale3, Mat3, Quat, Vec3};

pub const CAMERAS_FILE: &str = "cameras.txt";
pub const IMAGES_FILE: &str = "images.txt";
pub const POINTS_FILE: &str = "points3D.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct PinholeIntrinsics {
    pub focal_x: f64,
    pub focal_y: f64,
    pub principal_x: f64,
    pub principal_y: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SfmCamera {
    pub intrinsics: PinholeIntrinsics,
    /// Whether the source record used the single-focal model.
    pub simple: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SfmImage {
    pub id: u32,
    pub camera_id: u32,
    /// World-to-camera rotation, `w, x, y, z`, unit norm.
    pub rotation: Quat<f64>,
    /// World-to-camera translation.
    pub translation: Vec3<f64>,
    pub name: String,
}

impl SfmImage {
    pub fn rotation_matrix(&self) -> Mat3<f64> {
        quat_to_mat(self.rotation)
    }

    /// Camera centre in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> Vec3<f64> {
        scale3(mat3_tvec(&self.rotation_matrix(), self.translation), -1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SfmPoint {
    pub id: u64,
    pub position: Vec3<f64>,
    pub color: [u8; 3],
    pub error: f64,
    pub observations: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SfmScene {
    pub cameras: BTreeMap<u32, SfmCamera>,
    pub images: Vec<SfmImage>,
    pub points: Vec<SfmPoint>,
}

impl SfmScene {
    pub fn camera_of(&self, image: &SfmImage) -> &SfmCamera {
        &self.cameras[&image.camera_id]
    }

    pub fn validate(&self) -> Result<()> {
        for img in &self.images {
            if !self.cameras.contains_key(&img.camera_id) {
                return Err(Error::domain(format!(
                    "image {} references missing camera {}",
                    img.id, img.camera_id
                )));
            }
            let n = img.rotation.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::domain(format!(
                    "image {} quaternion norm {n}",
                    img.id
                )));
            }
        }
        if let Some(p) = self
            .points
            .iter()
            .find(|p| p.position.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::domain(format!("point {} is not finite", p.id)));
        }
        Ok(())
    }
}

struct Lines<'a> {
    file: &'a str,
    text: &'a str,
}

impl<'a> Lines<'a> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            file: self.file.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Non-comment lines with 1-based line numbers. Blank lines are kept
    /// because the images file uses them for empty observation lists.
    fn records(&self) -> impl Iterator<Item = (usize, &'a str)> {
        self.text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.starts_with('#'))
    }

    fn field<T: std::str::FromStr>(&self, line: usize, tok: Option<&str>, what: &str) -> Result<T> {
        let tok = tok.ok_or_else(|| self.err(line, format!("missing {what}")))?;
        tok.parse()
            .map_err(|_| self.err(line, format!("invalid {what} `{tok}`")))
    }
}

fn parse_cameras(file: &str, text: &str) -> Result<BTreeMap<u32, SfmCamera>> {
    let lines = Lines { file, text };
    let mut cameras = BTreeMap::new();
    for (n, line) in lines.records().filter(|(_, l)| !l.is_empty()) {
        let mut tok = line.split_whitespace();
        let id: u32 = lines.field(n, tok.next(), "camera id")?;
        let model = tok.next().ok_or_else(|| lines.err(n, "missing camera model"))?;
        let width: u32 = lines.field(n, tok.next(), "width")?;
        let height: u32 = lines.field(n, tok.next(), "height")?;
        let params = tok
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| lines.err(n, format!("invalid camera parameter `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let (intrinsics, simple) = match (model, params.as_slice()) {
            ("SIMPLE_PINHOLE", &[f, cx, cy]) => (
                PinholeIntrinsics {
                    focal_x: f,
                    focal_y: f,
                    principal_x: cx,
                    principal_y: cy,
                    width,
                    height,
                },
                true,
            ),
            ("PINHOLE", &[fx, fy, cx, cy]) => (
                PinholeIntrinsics {
                    focal_x: fx,
                    focal_y: fy,
                    principal_x: cx,
                    principal_y: cy,
                    width,
                    height,
                },
                false,
            ),
            ("SIMPLE_PINHOLE", p) | ("PINHOLE", p) => {
                return Err(lines.err(n, format!("{model} with {} parameters", p.len())))
            }
            (other, _) => return Err(Error::UnsupportedCameraModel(other.to_string())),
        };
        if !(intrinsics.focal_x > 0.0 && intrinsics.focal_y > 0.0) {
            return Err(lines.err(n, "focal length must be positive"));
        }
        if cameras.insert(id, SfmCamera { intrinsics, simple }).is_some() {
            return Err(lines.err(n, format!("duplicate camera id {id}")));
        }
    }
    Ok(cameras)
}

fn parse_images(file: &str, text: &str) -> Result<Vec<SfmImage>> {
    let lines = Lines { file, text };
    let mut records = lines.records();
    let mut images = Vec::new();
    while let Some((n, line)) = records.next() {
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let id: u32 = lines.field(n, tok.next(), "image id")?;
        let mut q = [0.0; 4];
        for (c, name) in q.iter_mut().zip(["QW", "QX", "QY", "QZ"]) {
            *c = lines.field(n, tok.next(), name)?;
        }
        let mut t = [0.0; 3];
        for (c, name) in t.iter_mut().zip(["TX", "TY", "TZ"]) {
            *c = lines.field(n, tok.next(), name)?;
        }
        let camera_id: u32 = lines.field(n, tok.next(), "camera id")?;
        let name = tok.collect::<Vec<_>>().join(" ");
        if name.is_empty() {
            return Err(lines.err(n, "missing image name"));
        }
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        // Hand-written files carry few digits; accept and renormalize small drift.
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-3 {
            return Err(lines.err(n, format!("quaternion norm {norm} is not unit")));
        }
        let rotation = q.map(|c| c / norm);
        // The observation line follows; its content is not needed.
        if let Some((m, obs)) = records.next() {
            if obs.split_whitespace().count() % 3 != 0 {
                return Err(lines.err(m, "observation list is not (x, y, point id) triples"));
            }
        }
        images.push(SfmImage {
            id,
            camera_id,
            rotation,
            translation: t,
            name,
        });
    }
    Ok(images)
}

fn parse_points(file: &str, text: &str) -> Result<Vec<SfmPoint>> {
    let lines = Lines { file, text };
    let mut points = Vec::new();
    for (n, line) in lines.records().filter(|(_, l)| !l.is_empty()) {
        let mut tok = line.split_whitespace();
        let id: u64 = lines.field(n, tok.next(), "point id")?;
        let mut position = [0.0; 3];
        for (c, name) in position.iter_mut().zip(["X", "Y", "Z"]) {
            *c = lines.field(n, tok.next(), name)?;
        }
        if position.iter().any(|c: &f64| !c.is_finite()) {
            return Err(lines.err(n, "non-finite point position"));
        }
        let mut color = [0u8; 3];
        for (c, name) in color.iter_mut().zip(["R", "G", "B"]) {
            *c = lines.field(n, tok.next(), name)?;
        }
        let error: f64 = lines.field(n, tok.next(), "reprojection error")?;
        let track = tok.count();
        if track % 2 != 0 {
            return Err(lines.err(n, "track is not (image id, point2d index) pairs"));
        }
        points.push(SfmPoint {
            id,
            position,
            color,
            error,
            observations: track / 2,
        });
    }
    Ok(points)
}

fn read(dir: &Path, name: &str) -> Result<(String, String)> {
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok((path.display().to_string(), text))
}

/// Parses `cameras.txt`, `images.txt` and `points3D.txt` from `dir`.
pub fn parse_sfm_text(dir: &Path) -> Result<SfmScene> {
    let (f, t) = read(dir, CAMERAS_FILE)?;
    let cameras = parse_cameras(&f, &t)?;
    let (f, t) = read(dir, IMAGES_FILE)?;
    let images = parse_images(&f, &t)?;
    let (f, t) = read(dir, POINTS_FILE)?;
    let points = parse_points(&f, &t)?;
    let scene = SfmScene {
        cameras,
        images,
        points,
    };
    scene.validate()?;
    Ok(scene)
}

/// Writes the scene in the same text interchange. Observation lists are
/// not retained by the parser, so images get an empty observation line and
/// points a synthetic track of the recorded length.
pub fn write_sfm_text(scene: &SfmScene, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut cams = String::from("# Camera list with one line of data per camera:\n#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    writeln!(cams, "# Number of cameras: {}", scene.cameras.len()).unwrap();
    for (id, cam) in &scene.cameras {
        let k = &cam.intrinsics;
        if cam.simple {
            writeln!(
                cams,
                "{id} SIMPLE_PINHOLE {} {} {:?} {:?} {:?}",
                k.width, k.height, k.focal_x, k.principal_x, k.principal_y
            )
        } else {
            writeln!(
                cams,
                "{id} PINHOLE {} {} {:?} {:?} {:?} {:?}",
                k.width, k.height, k.focal_x, k.focal_y, k.principal_x, k.principal_y
            )
        }
        .unwrap();
    }
    let mut imgs = String::from("# Image list with two lines of data per image:\n#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n#   POINTS2D[] as (X, Y, POINT3D_ID)\n");
    writeln!(imgs, "# Number of images: {}", scene.images.len()).unwrap();
    for img in &scene.images {
        let [qw, qx, qy, qz] = img.rotation;
        let [tx, ty, tz] = img.translation;
        writeln!(
            imgs,
            "{} {qw:?} {qx:?} {qy:?} {qz:?} {tx:?} {ty:?} {tz:?} {} {}\n",
            img.id, img.camera_id, img.name
        )
        .unwrap();
    }
    let mut pts = String::from("# 3D point list with one line of data per point:\n#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n");
    writeln!(pts, "# Number of points: {}", scene.points.len()).unwrap();
    for p in &scene.points {
        let [x, y, z] = p.position;
        let [r, g, b] = p.color;
        write!(pts, "{} {x:?} {y:?} {z:?} {r} {g} {b} {:?}", p.id, p.error).unwrap();
        for k in 0..p.observations {
            write!(pts, " {} {k}", k + 1).unwrap();
        }
        pts.push('\n');
    }
    for (name, body) in [(CAMERAS_FILE, cams), (IMAGES_FILE, imgs), (POINTS_FILE, pts)] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
