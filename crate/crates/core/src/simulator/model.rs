//! Union-of-spheres object models.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: [f64; 3], radius: f64) -> Self {
        Sphere { center, radius }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSource {
    Mesh,
    Primitive,
}

/// An object approximated as a union of spheres, resting on the support plane `z = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereModel {
    name: String,
    source: ModelSource,
    spheres: Vec<Sphere>,
}

impl SphereModel {
    /// Builds a model and lifts it vertically so its lowest point touches `z = 0`.
    pub fn resting(
        name: impl Into<String>,
        source: ModelSource,
        mut spheres: Vec<Sphere>,
    ) -> Result<Self> {
        if spheres.is_empty() {
            return Err(Error::InvalidInput("sphere model has no spheres".into()));
        }
        for s in &spheres {
            if !(s.radius > 0.0 && s.radius.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "sphere radius must be positive, got {}",
                    s.radius
                )));
            }
            if s.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput("non-finite sphere center".into()));
            }
        }
        let bottom = spheres
            .iter()
            .map(|s| s.center[2] - s.radius)
            .fold(f64::INFINITY, f64::min);
        for s in &mut spheres {
            s.center[2] -= bottom;
        }
        Ok(SphereModel {
            name: name.into(),
            source,
            spheres,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> ModelSource {
        self.source
    }

    pub fn spheres(&self) -> &[Sphere] {
        &self.spheres
    }

    /// Highest point of the model above the support plane.
    pub fn top(&self) -> f64 {
        self.spheres
            .iter()
            .map(|s| s.center[2] + s.radius)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn bottom(&self) -> f64 {
        self.spheres
            .iter()
            .map(|s| s.center[2] - s.radius)
            .fold(f64::INFINITY, f64::min)
    }

    /// Lateral bounding box `[xmin, xmax, ymin, ymax]` including radii.
    pub fn footprint(&self) -> [f64; 4] {
        let mut b = [
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ];
        for s in &self.spheres {
            b[0] = b[0].min(s.center[0] - s.radius);
            b[1] = b[1].max(s.center[0] + s.radius);
            b[2] = b[2].min(s.center[1] - s.radius);
            b[3] = b[3].max(s.center[1] + s.radius);
        }
        b
    }

    /// Shifts the model laterally so its footprint is centered on the origin.
    pub fn centered_xy(mut self) -> Self {
        let b = self.footprint();
        let (cx, cy) = ((b[0] + b[1]) / 2.0, (b[2] + b[3]) / 2.0);
        self.translate(-cx, -cy);
        self
    }

    pub fn translate(&mut self, dx: f64, dy: f64) {
        for s in &mut self.spheres {
            s.center[0] += dx;
            s.center[1] += dy;
        }
    }
}

/// Converts mesh vertices into a union-of-spheres model.
///
/// One sphere is placed at every vertex. All spheres share a radius of twice the
/// mean nearest-neighbour distance between vertices.
pub fn spheres_from_vertices(vertices: &[[f64; 3]], name: &str) -> Result<SphereModel> {
    if vertices.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 vertices, got {}",
            vertices.len()
        )));
    }
    if vertices.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("non-finite vertex coordinate".into()));
    }
    let nn = nearest_neighbor_distances(vertices);
    if let Some(i) = nn.iter().position(|&d| d == 0.0) {
        return Err(Error::DegenerateInput(format!(
            "vertex {i} coincides with another vertex"
        )));
    }
    let radius = 2.0 * nn.iter().sum::<f64>() / nn.len() as f64;
    let spheres = vertices.iter().map(|&v| Sphere::new(v, radius)).collect();
    SphereModel::resting(name, ModelSource::Mesh, spheres)
}

/// Nearest-neighbour distance for every point, using a uniform cell grid.
fn nearest_neighbor_distances(points: &[[f64; 3]]) -> Vec<f64> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let extent: Vec<f64> = (0..3).map(|a| hi[a] - lo[a]).collect();
    let largest = extent.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 {
        return vec![0.0; points.len()];
    }
    // Aim for about one point per cell along the populated axes.
    let populated: Vec<f64> = extent
        .iter()
        .filter(|&&e| e > largest * 1e-9)
        .cloned()
        .collect();
    let measure: f64 = populated.iter().product();
    let cell = (measure / points.len() as f64)
        .powf(1.0 / populated.len() as f64)
        .max(largest * 1e-6);
    let dims: Vec<usize> = extent
        .iter()
        .map(|e| ((e / cell).floor() as usize + 1).min(1 << 20))
        .collect();

    let key = |p: &[f64; 3]| -> [usize; 3] {
        let mut k = [0usize; 3];
        for a in 0..3 {
            k[a] = (((p[a] - lo[a]) / cell) as usize).min(dims[a] - 1);
        }
        k
    };
    let mut cells: std::collections::HashMap<[usize; 3], Vec<usize>> =
        std::collections::HashMap::new();
    for (i, p) in points.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let max_shell = *dims.iter().max().unwrap();

    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let k = key(p);
            let mut best = f64::INFINITY;
            for shell in 0..=max_shell {
                let r = shell as isize;
                let range = |a: usize| {
                    let k = k[a] as isize;
                    (-r).max(-k)..=r.min(dims[a] as isize - 1 - k)
                };
                for dx in range(0) {
                    for dy in range(1) {
                        for dz in range(2) {
                            if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                                continue;
                            }
                            let c = [
                                (k[0] as isize + dx) as usize,
                                (k[1] as isize + dy) as usize,
                                (k[2] as isize + dz) as usize,
                            ];
                            if let Some(members) = cells.get(&c) {
                                for &j in members {
                                    if j != i {
                                        best = best.min(dist(p, &points[j]));
                                    }
                                }
                            }
                        }
                    }
                }
                // Anything outside this shell is at least `shell * cell` away.
                if best <= shell as f64 * cell {
                    break;
                }
            }
            best
        })
        .collect()
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Primitive shapes that can be procedurally covered with spheres.
///
/// Cylinders stand upright with their axis along `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Primitive {
    Box { size: [f64; 3] },
    Sphere { radius: f64 },
    Cylinder { radius: f64, height: f64 },
}

impl Primitive {
    fn smallest_dimension(&self) -> f64 {
        match *self {
            Primitive::Box { size } => size.iter().cloned().fold(f64::INFINITY, f64::min),
            Primitive::Sphere { radius } => 2.0 * radius,
            Primitive::Cylinder { radius, height } => (2.0 * radius).min(height),
        }
    }

    fn dimensions(&self) -> Vec<f64> {
        match *self {
            Primitive::Box { size } => size.to_vec(),
            Primitive::Sphere { radius } => vec![radius],
            Primitive::Cylinder { radius, height } => vec![radius, height],
        }
    }
}

/// Number of equal segments needed so that each is no longer than `spacing`.
fn segments(length: f64, spacing: f64) -> usize {
    ((length / spacing) - 1e-9).ceil().max(1.0) as usize
}

/// Points spaced at most `spacing` apart (by arc length) on a horizontal circle.
fn ring(radius: f64, z: f64, spacing: f64, out: &mut Vec<[f64; 3]>) {
    if radius <= 1e-12 {
        out.push([0.0, 0.0, z]);
        return;
    }
    let n = segments(2.0 * PI * radius, spacing);
    for j in 0..n {
        let phi = 2.0 * PI * j as f64 / n as f64;
        out.push([radius * phi.cos(), radius * phi.sin(), z]);
    }
}

/// Covers the surface of a primitive with spheres of radius `spacing` whose
/// centers lie on the surface on a lattice no coarser than `spacing`.
pub fn make_primitive(name: &str, shape: &Primitive, spacing: f64) -> Result<SphereModel> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "sphere spacing must be positive, got {spacing}"
        )));
    }
    if shape
        .dimensions()
        .iter()
        .any(|&d| !(d > 0.0 && d.is_finite()))
    {
        return Err(Error::InvalidInput(format!(
            "primitive dimensions must be positive: {shape:?}"
        )));
    }
    if spacing >= shape.smallest_dimension() {
        return Err(Error::Coverage(format!(
            "spacing {spacing} mm is not smaller than the smallest dimension {} mm",
            shape.smallest_dimension()
        )));
    }

    let mut centers = Vec::new();
    match *shape {
        Primitive::Box { size } => {
            let n: Vec<usize> = size.iter().map(|&l| segments(l, spacing)).collect();
            for i in 0..=n[0] {
                for j in 0..=n[1] {
                    for k in 0..=n[2] {
                        let on_face =
                            i == 0 || i == n[0] || j == 0 || j == n[1] || k == 0 || k == n[2];
                        if on_face {
                            centers.push([
                                size[0] * (i as f64 / n[0] as f64 - 0.5),
                                size[1] * (j as f64 / n[1] as f64 - 0.5),
                                size[2] * (k as f64 / n[2] as f64 - 0.5),
                            ]);
                        }
                    }
                }
            }
        }
        Primitive::Sphere { radius } => {
            let n_lat = segments(PI * radius, spacing);
            for k in 0..=n_lat {
                let theta = PI * k as f64 / n_lat as f64;
                ring(
                    radius * theta.sin(),
                    radius * theta.cos(),
                    spacing,
                    &mut centers,
                );
            }
        }
        Primitive::Cylinder { radius, height } => {
            let nz = segments(height, spacing);
            for k in 0..=nz {
                ring(
                    radius,
                    height * (k as f64 / nz as f64 - 0.5),
                    spacing,
                    &mut centers,
                );
            }
            let nr = segments(radius, spacing);
            for z in [-height / 2.0, height / 2.0] {
                for j in 0..nr {
                    ring(radius * j as f64 / nr as f64, z, spacing, &mut centers);
                }
            }
        }
    }

    let spheres = centers
        .into_iter()
        .map(|c| Sphere::new(c, spacing))
        .collect();
    SphereModel::resting(name, ModelSource::Primitive, spheres)
}
