//! Mesh and point-set ingestion: OFF parsing, surface sampling,
//! normalization, point-set file formats and dataset manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::rng::Stream;
use crate::scalar::{cast, Real};

#[derive(Debug, Error)]
pub enum PcioError {
    #[error("malformed OFF header: {0}")]
    MalformedHeader(String),
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("face {face} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("file truncated: expected {expected} {what}, found {found}")]
    TruncatedFile {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("mesh has zero total surface area")]
    DegenerateMesh,
    #[error("unknown point-set magic {0:?}")]
    UnknownMagic([u8; 4]),
    #[error("point-set length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("unknown class name {0:?}")]
    UnknownClassName(String),
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = PcioError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PcioError + '_ {
    move |source| PcioError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Triangle mesh in model units.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn triangle_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.faces[face].map(|i| self.vertices[i]);
        let u = sub(b, a);
        let v = sub(c, a);
        let n = cross(u, v);
        0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.triangle_area(f)).sum()
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(u: [f64; 3], v: [f64; 3]) -> [f64; 3] {
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

/// An unordered set of 3D points with optional per-point color and class label.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T> {
    pub points: Vec<[T; 3]>,
    pub colors: Option<Vec<[T; 3]>>,
    pub label: Option<u32>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<[T; 3]>) -> Self {
        Self {
            points,
            colors: None,
            label: None,
        }
    }

    pub fn with_colors(points: Vec<[T; 3]>, colors: Vec<[T; 3]>) -> Result<Self> {
        let pc = Self {
            points,
            colors: Some(colors),
            label: None,
        };
        pc.validate()?;
        Ok(pc)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(PcioError::InvalidCloud("no points".into()));
        }
        if let Some(i) = self.points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(PcioError::InvalidCloud(format!("point {i} is not finite")));
        }
        if let Some(colors) = &self.colors {
            if colors.len() != self.points.len() {
                return Err(PcioError::InvalidCloud(format!(
                    "{} colors for {} points",
                    colors.len(),
                    self.points.len()
                )));
            }
        }
        Ok(())
    }

    /// Sub-cloud holding the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            colors: self.colors.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
            label: self.label,
        }
    }

    pub fn centroid(&self) -> [f64; 3] {
        let mut acc = [0.0f64; 3];
        for p in &self.points {
            for d in 0..3 {
                acc[d] += p[d].to_f64_lossy();
            }
        }
        let n = self.points.len().max(1) as f64;
        acc.map(|a| a / n)
    }

    pub fn cast<U: Real>(&self) -> PointCloud<U> {
        let conv = |v: &Vec<[T; 3]>| -> Vec<[U; 3]> {
            v.iter()
                .map(|p| p.map(|c| U::from_f64_lossy(c.to_f64_lossy())))
                .collect()
        };
        PointCloud {
            points: conv(&self.points),
            colors: self.colors.as_ref().map(conv),
            label: self.label,
        }
    }
}

/// Parse an OFF mesh. Polygons with more than three vertices are fan-triangulated.
pub fn parse_off(bytes: &[u8]) -> Result<Mesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| PcioError::MalformedHeader(format!("not UTF-8: {e}")))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (first_no, first) = lines
        .next()
        .ok_or_else(|| PcioError::MalformedHeader("empty file".into()))?;
    // Some corpus files fuse the header with the counts ("OFF3 1 0").
    let counts_line = match first.strip_prefix("OFF") {
        Some(rest) if rest.trim().is_empty() => lines
            .next()
            .ok_or_else(|| PcioError::MalformedHeader("missing counts line".into()))?,
        Some(rest) => (first_no, rest.trim()),
        None => (first_no, first),
    };
    let counts: Vec<usize> = counts_line
        .1
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| {
            PcioError::MalformedHeader(format!(
                "line {}: counts {:?} are not integers",
                counts_line.0, counts_line.1
            ))
        })?;
    if counts.len() < 2 || counts.len() > 3 {
        return Err(PcioError::MalformedHeader(format!(
            "line {}: expected `nv nf [ne]`, found {:?}",
            counts_line.0, counts_line.1
        )));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for found in 0..nv {
        let (no, line) = lines.next().ok_or(PcioError::TruncatedFile {
            what: "vertices",
            expected: nv,
            found,
        })?;
        let mut it = line.split_whitespace().map(str::parse::<f64>);
        let mut v = [0.0; 3];
        for c in v.iter_mut() {
            *c = match it.next() {
                Some(Ok(x)) if x.is_finite() => x,
                _ => {
                    return Err(PcioError::MalformedLine {
                        line: no,
                        reason: "vertex needs three finite coordinates".into(),
                    })
                }
            };
        }
        vertices.push(v);
    }

    let mut faces = Vec::with_capacity(nf);
    for found in 0..nf {
        let (no, line) = lines.next().ok_or(PcioError::TruncatedFile {
            what: "faces",
            expected: nf,
            found,
        })?;
        let nums: Vec<usize> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| PcioError::MalformedLine {
                line: no,
                reason: "face entries must be integers".into(),
            })?;
        let n = *nums.first().ok_or_else(|| PcioError::MalformedLine {
            line: no,
            reason: "empty face".into(),
        })?;
        if n < 3 || nums.len() < n + 1 {
            return Err(PcioError::MalformedLine {
                line: no,
                reason: format!("face declares {n} vertices but lists {}", nums.len() - 1),
            });
        }
        let poly = &nums[1..=n];
        if let Some(&bad) = poly.iter().find(|&&i| i >= nv) {
            return Err(PcioError::IndexOutOfRange {
                face: found,
                index: bad,
                vertex_count: nv,
            });
        }
        for k in 1..n - 1 {
            faces.push([poly[0], poly[k], poly[k + 1]]);
        }
    }
    Ok(Mesh { vertices, faces })
}

/// Draw `n` points uniformly over the mesh surface (area-weighted triangle
/// choice, then uniform barycentric coordinates).
pub fn sample_mesh_surface<T: Real>(mesh: &Mesh, n: usize, seed: u64) -> Result<PointCloud<T>> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.triangle_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(PcioError::DegenerateMesh);
    }
    let mut rng = Stream::new(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.uniform() * total;
        // First triangle whose cumulative area exceeds u; zero-area faces have empty intervals.
        let f = cumulative.partition_point(|&c| c <= u).min(mesh.faces.len() - 1);
        let [a, b, c] = mesh.faces[f].map(|i| mesh.vertices[i]);
        let r1 = rng.uniform().sqrt();
        let r2 = rng.uniform();
        let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        points.push([0, 1, 2].map(|d| cast::<T>(wa * a[d] + wb * b[d] + wc * c[d])));
    }
    Ok(PointCloud::new(points))
}

/// Center on the centroid and scale into the unit sphere (max norm 1).
pub fn normalize_cloud<T: Real>(pc: &PointCloud<T>) -> PointCloud<T> {
    let c = pc.centroid();
    let centered: Vec<[f64; 3]> = pc
        .points
        .iter()
        .map(|p| [0, 1, 2].map(|d| p[d].to_f64_lossy() - c[d]))
        .collect();
    let max_norm = centered
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .fold(0.0f64, f64::max);
    let scale = if max_norm > 0.0 { 1.0 / max_norm } else { 0.0 };
    PointCloud {
        points: centered.iter().map(|p| p.map(|x| cast::<T>(x * scale))).collect(),
        colors: pc.colors.clone(),
        label: pc.label,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSetFormat {
    /// Whitespace-separated `x y z [r g b]` per line, `#` comments.
    XyzText,
    /// `PHP1` magic, u32 LE count, u8 dims, 3 reserved bytes, LE f32 body.
    PackedBinary,
}

impl PointSetFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "xyz" | "txt" => Some(Self::XyzText),
            "php" | "bin" => Some(Self::PackedBinary),
            _ => None,
        }
    }
}

pub const POINT_SET_MAGIC: &[u8; 4] = b"PHP1";
const PACKED_HEADER: usize = 12;

pub fn read_point_set<T: Real>(bytes: &[u8], format: PointSetFormat) -> Result<PointCloud<T>> {
    let pc = match format {
        PointSetFormat::XyzText => read_xyz(bytes)?,
        PointSetFormat::PackedBinary => read_packed(bytes)?,
    };
    pc.validate()?;
    Ok(pc)
}

pub fn write_point_set<T: Real>(pc: &PointCloud<T>, format: PointSetFormat) -> Vec<u8> {
    match format {
        PointSetFormat::XyzText => write_xyz(pc).into_bytes(),
        PointSetFormat::PackedBinary => write_packed(pc),
    }
}

fn read_xyz<T: Real>(bytes: &[u8]) -> Result<PointCloud<T>> {
    let text = std::str::from_utf8(bytes).map_err(|e| PcioError::MalformedLine {
        line: 0,
        reason: format!("not UTF-8: {e}"),
    })?;
    let mut points = Vec::new();
    let mut colors = Vec::new();
    let mut dims = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| PcioError::MalformedLine {
                line: i + 1,
                reason: "non-numeric value".into(),
            })?;
        if vals.len() != 3 && vals.len() != 6 {
            return Err(PcioError::MalformedLine {
                line: i + 1,
                reason: format!("expected 3 or 6 values, found {}", vals.len()),
            });
        }
        match dims {
            None => dims = Some(vals.len()),
            Some(d) if d != vals.len() => {
                return Err(PcioError::MalformedLine {
                    line: i + 1,
                    reason: format!("mixed column counts ({d} and {})", vals.len()),
                })
            }
            _ => {}
        }
        points.push([cast(vals[0]), cast(vals[1]), cast(vals[2])]);
        if vals.len() == 6 {
            colors.push([cast(vals[3]), cast(vals[4]), cast(vals[5])]);
        }
    }
    Ok(PointCloud {
        points,
        colors: (dims == Some(6)).then_some(colors),
        label: None,
    })
}

fn write_xyz<T: Real>(pc: &PointCloud<T>) -> String {
    let mut out = String::with_capacity(pc.len() * 32);
    for (i, p) in pc.points.iter().enumerate() {
        let _ = write!(out, "{} {} {}", p[0], p[1], p[2]);
        if let Some(c) = &pc.colors {
            let _ = write!(out, " {} {} {}", c[i][0], c[i][1], c[i][2]);
        }
        out.push('\n');
    }
    out
}

fn read_packed<T: Real>(bytes: &[u8]) -> Result<PointCloud<T>> {
    if bytes.len() < PACKED_HEADER {
        return Err(PcioError::LengthMismatch {
            expected: PACKED_HEADER,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != POINT_SET_MAGIC {
        return Err(PcioError::UnknownMagic(magic));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dims = bytes[8] as usize;
    if dims != 3 && dims != 6 {
        return Err(PcioError::InvalidCloud(format!("dims byte {dims}")));
    }
    let expected = PACKED_HEADER + n * dims * 4;
    if bytes.len() != expected {
        return Err(PcioError::LengthMismatch {
            expected,
            found: bytes.len(),
        });
    }
    let body = &bytes[PACKED_HEADER..];
    let val = |k: usize| -> T {
        let x = f32::from_le_bytes(body[4 * k..4 * k + 4].try_into().unwrap());
        cast(x as f64)
    };
    let points = (0..n)
        .map(|i| [val(i * dims), val(i * dims + 1), val(i * dims + 2)])
        .collect();
    let colors = (dims == 6).then(|| {
        (0..n)
            .map(|i| [val(i * dims + 3), val(i * dims + 4), val(i * dims + 5)])
            .collect()
    });
    Ok(PointCloud {
        points,
        colors,
        label: None,
    })
}

fn write_packed<T: Real>(pc: &PointCloud<T>) -> Vec<u8> {
    let dims: usize = if pc.colors.is_some() { 6 } else { 3 };
    let mut out = Vec::with_capacity(PACKED_HEADER + pc.len() * dims * 4);
    out.extend_from_slice(POINT_SET_MAGIC);
    out.extend_from_slice(&(pc.len() as u32).to_le_bytes());
    out.extend_from_slice(&[dims as u8, 0, 0, 0]);
    let mut put = |x: T| out.extend_from_slice(&(x.to_f64_lossy() as f32).to_le_bytes());
    for (i, p) in pc.points.iter().enumerate() {
        p.iter().for_each(|&c| put(c));
        if let Some(c) = &pc.colors {
            c[i].iter().for_each(|&c| put(c));
        }
    }
    out
}

pub fn load_point_set<T: Real>(path: &Path) -> Result<PointCloud<T>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    match PointSetFormat::from_path(path) {
        Some(format) => read_point_set(&bytes, format),
        None if path.extension().is_some_and(|e| e == "off") => {
            let mesh = parse_off(&bytes)?;
            Ok(PointCloud::new(
                mesh.vertices.iter().map(|v| v.map(|c| cast::<T>(c))).collect(),
            ))
        }
        None => read_point_set(&bytes, PointSetFormat::PackedBinary),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?} (expected train or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<(PathBuf, u32)>,
    pub class_names: Vec<String>,
    pub split: Split,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `path<TAB>class_name` lines, paths relative to `base` when possible.
    pub fn to_tsv(&self, base: &Path) -> String {
        let mut out = String::new();
        for (path, class) in &self.entries {
            let rel = path.strip_prefix(base).unwrap_or(path);
            let _ = writeln!(out, "{}\t{}", rel.display(), self.class_names[*class as usize]);
        }
        out
    }
}

/// Manifest file name for a split inside a converted dataset root.
pub fn manifest_file_name(split: Split) -> String {
    format!("{}.tsv", split.as_str())
}

const SAMPLE_EXTENSIONS: &[&str] = &["off", "php", "bin", "xyz", "txt"];

/// Load a split. `root` may be a manifest file, a directory holding
/// `<split>.tsv`, or a `<root>/<class>/<split>/<file>` tree.
pub fn load_manifest(root: &Path, split: Split) -> Result<DatasetManifest> {
    load_manifest_with_classes(root, split, None)
}

/// As [`load_manifest`], but class ids are assigned against a fixed class list
/// (typically the training split's), failing on names outside it.
pub fn load_manifest_with_classes(root: &Path, split: Split, classes: Option<&[String]>) -> Result<DatasetManifest> {
    let manifest_file = if root.is_file() {
        Some(root.to_path_buf())
    } else {
        let candidate = root.join(manifest_file_name(split));
        candidate.is_file().then_some(candidate)
    };
    let mut named: Vec<(PathBuf, String)> = match &manifest_file {
        Some(file) => read_tsv(file)?,
        None => scan_tree(root, split)?,
    };
    if named.is_empty() {
        return Err(PcioError::EmptyDataset(format!(
            "no {} samples under {}",
            split.as_str(),
            root.display()
        )));
    }
    named.sort();
    let class_names: Vec<String> = match classes {
        Some(c) => c.to_vec(),
        None => {
            let mut names: Vec<String> = named.iter().map(|(_, c)| c.clone()).collect();
            names.sort();
            names.dedup();
            names
        }
    };
    let entries = named
        .into_iter()
        .map(|(path, name)| {
            class_names
                .binary_search(&name)
                .map(|id| (path, id as u32))
                .map_err(|_| PcioError::UnknownClassName(name))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetManifest {
        entries,
        class_names,
        split,
    })
}

fn read_tsv(file: &Path) -> Result<Vec<(PathBuf, String)>> {
    let text = fs::read_to_string(file).map_err(io_err(file))?;
    let base = file.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (path, class) = line.split_once('\t').ok_or_else(|| PcioError::MalformedLine {
            line: i + 1,
            reason: "expected `path<TAB>class_name`".into(),
        })?;
        let path = Path::new(path);
        let path = if path.is_absolute() {
            path.to_path_buf()
        } else {
            base.join(path)
        };
        out.push((path, class.trim().to_string()));
    }
    Ok(out)
}

fn scan_tree(root: &Path, split: Split) -> Result<Vec<(PathBuf, String)>> {
    let mut classes: Vec<(String, PathBuf)> = fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| Some((e.file_name().to_str()?.to_string(), e.path())))
        .collect();
    classes.sort();
    let mut out = Vec::new();
    for (name, dir) in classes {
        let split_dir = dir.join(split.as_str());
        let files: Vec<PathBuf> = match fs::read_dir(&split_dir) {
            Ok(rd) => rd
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| {
                    p.is_file()
                        && p.extension()
                            .and_then(|e| e.to_str())
                            .is_some_and(|e| SAMPLE_EXTENSIONS.contains(&e))
                })
                .collect(),
            Err(_) => Vec::new(),
        };
        if files.is_empty() {
            return Err(PcioError::EmptyDataset(format!(
                "class {name:?} has no {} samples in {}",
                split.as_str(),
                split_dir.display()
            )));
        }
        out.extend(files.into_iter().map(|p| (p, name.clone())));
    }
    Ok(out)
}
