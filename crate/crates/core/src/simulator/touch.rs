//! Quasistatic touch simulation.
//!
//! Each taxel is a rigid sphere on a spring that can only slide along the
//! substrate normal. At equilibrium a taxel sits at the lowest height that keeps
//! it clear of every model sphere and of the support plane, and reports
//! `stiffness * displacement`. Dampers carry no load at rest.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::SphereModel;
use crate::error::{Error, Result};

/// Gap between the object's highest point and the taxel spheres before pressing.
pub const START_CLEARANCE_MM: f64 = 1.0;
/// Upper bound of a taxel's force range.
pub const SENSOR_MAX_N: f64 = 0.02;
pub const DEFAULT_STIFFNESS: f64 = 0.001;
/// Substrate travel that drives the first-contact taxels 10 mm, i.e. 0.01 N at the default stiffness.
pub const DEFAULT_PRESS_DEPTH: f64 = 11.0;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.001;
pub const DEFAULT_EXTENT_MM: f64 = 256.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaxelArray {
    pub rows: usize,
    pub cols: usize,
    pub pitch: f64,
    pub taxel_radius: f64,
    pub stiffness: f64,
    pub substrate_extent: f64,
}

impl TaxelArray {
    pub fn new(
        rows: usize,
        cols: usize,
        pitch: f64,
        taxel_radius: f64,
        stiffness: f64,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(
                "taxel array needs at least one row and column".into(),
            ));
        }
        if !(pitch > 0.0 && pitch.is_finite()) || !(taxel_radius > 0.0 && taxel_radius.is_finite())
        {
            return Err(Error::InvalidInput(
                "pitch and taxel radius must be positive".into(),
            ));
        }
        if !(stiffness > 0.0 && stiffness.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "stiffness must be positive, got {stiffness}"
            )));
        }
        Ok(TaxelArray {
            rows,
            cols,
            pitch,
            taxel_radius,
            stiffness,
            substrate_extent: pitch * rows as f64,
        })
    }

    /// Square `side × side` grid spanning `extent` mm, with taxel radius of half the pitch.
    pub fn square(side: usize, extent: f64, stiffness: f64) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidInput(
                "taxel array needs at least one row and column".into(),
            ));
        }
        let pitch = extent / side as f64;
        TaxelArray::new(side, side, pitch, pitch / 2.0, stiffness)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lateral position of taxel `(row, col)`; the array is centered on the origin,
    /// rows advance along `y` and columns along `x`.
    pub fn taxel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5) * self.pitch - self.cols as f64 * self.pitch / 2.0,
            (row as f64 + 0.5) * self.pitch - self.rows as f64 * self.pitch / 2.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchConfig {
    /// Object displacement along the row direction (`y`), mm.
    pub offset_row: f64,
    /// Object displacement along the column direction (`x`), mm.
    pub offset_col: f64,
    /// Object rotation about the array's central normal axis, degrees.
    pub rotation_deg: f64,
    pub press_depth: f64,
    pub seed: u64,
}

impl TouchConfig {
    pub fn new(
        offset_row: f64,
        offset_col: f64,
        rotation_deg: f64,
        press_depth: f64,
        seed: u64,
    ) -> Result<Self> {
        let t = TouchConfig {
            offset_row,
            offset_col,
            rotation_deg,
            press_depth,
            seed,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.press_depth > 0.0 && self.press_depth.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "press depth must be positive, got {}",
                self.press_depth
            )));
        }
        if !(0.0..360.0).contains(&self.rotation_deg) {
            return Err(Error::InvalidInput(format!(
                "rotation must lie in [0, 360), got {}",
                self.rotation_deg
            )));
        }
        if !self.offset_row.is_finite() || !self.offset_col.is_finite() {
            return Err(Error::InvalidInput("non-finite touch offset".into()));
        }
        Ok(())
    }
}

/// One touch: per-taxel forces in newtons, row-major over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TactileFrame {
    pub values: Vec<f64>,
    pub array: TaxelArray,
    pub label: usize,
    pub perturbation: usize,
    pub touch: TouchConfig,
    pub noisy: bool,
}

impl TactileFrame {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.array.cols + col]
    }
}

/// Presses the array onto the model and returns the noiseless equilibrium forces.
///
/// The model is rotated about the array's central axis, then shifted by the touch
/// offsets. The substrate starts [`START_CLEARANCE_MM`] above the model and is
/// lowered by `press_depth`.
pub fn simulate_touch(
    array: &TaxelArray,
    model: &SphereModel,
    touch: &TouchConfig,
) -> Result<TactileFrame> {
    touch.validate()?;
    let rt = array.taxel_radius;
    let rest_height = model.top() + START_CLEARANCE_MM + rt - touch.press_depth;

    let (sin, cos) = touch.rotation_deg.to_radians().sin_cos();
    let half_w = array.cols as f64 * array.pitch / 2.0;
    let half_h = array.rows as f64 * array.pitch / 2.0;

    // Height each taxel center must reach; the support plane sets the floor.
    let mut required = vec![rt; array.len()];
    let mut outside = false;
    for s in model.spheres() {
        let [x0, y0, z] = s.center;
        let x = cos * x0 - sin * y0 + touch.offset_col;
        let y = sin * x0 + cos * y0 + touch.offset_row;
        if x.abs() + s.radius > half_w || y.abs() + s.radius > half_h {
            outside = true;
        }
        let reach = s.radius + rt;
        let reach_sq = reach * reach;
        // Taxel index ranges whose centers lie within `reach` laterally.
        let col_lo = (((x - reach + half_w) / array.pitch - 0.5).ceil().max(0.0)) as usize;
        let col_hi =
            (((x + reach + half_w) / array.pitch - 0.5).floor()).min(array.cols as f64 - 1.0);
        let row_lo = (((y - reach + half_h) / array.pitch - 0.5).ceil().max(0.0)) as usize;
        let row_hi =
            (((y + reach + half_h) / array.pitch - 0.5).floor()).min(array.rows as f64 - 1.0);
        if col_hi < 0.0 || row_hi < 0.0 {
            continue;
        }
        for row in row_lo..=row_hi as usize {
            for col in col_lo..=col_hi as usize {
                let (tx, ty) = array.taxel_center(row, col);
                let rho_sq = (tx - x).powi(2) + (ty - y).powi(2);
                if rho_sq < reach_sq {
                    let h = z + (reach_sq - rho_sq).sqrt();
                    let r = &mut required[row * array.cols + col];
                    if h > *r {
                        *r = h;
                    }
                }
            }
        }
    }
    if outside {
        log::warn!(
            "model '{}' extends past the array footprint at {:?}",
            model.name(),
            touch
        );
    }

    let values = required
        .into_iter()
        .map(|h| array.stiffness * (h - rest_height).max(0.0))
        .collect();
    Ok(TactileFrame {
        values,
        array: *array,
        label: 0,
        perturbation: 0,
        touch: *touch,
        noisy: false,
    })
}

/// Adds i.i.d. Gaussian noise and clips every reading to the sensor range `[0, 0.02]` N.
pub fn add_noise(frame: &TactileFrame, sigma: f64, seed: u64) -> Result<TactileFrame> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise sigma must be non-negative, got {sigma}"
        )));
    }
    if frame.noisy {
        return Err(Error::InvalidInput("frame already carries noise".into()));
    }
    let mut rng = crate::seed::rng(seed);
    let values = frame
        .values
        .iter()
        .map(|&v| {
            let g: f64 = rng.sample(StandardNormal);
            (v + sigma * g).clamp(0.0, SENSOR_MAX_N)
        })
        .collect();
    Ok(TactileFrame {
        values,
        noisy: true,
        ..frame.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::model::{ModelSource, Sphere};

    fn touch(depth: f64) -> TouchConfig {
        TouchConfig::new(0.0, 0.0, 0.0, depth, 0).unwrap()
    }

    fn ball(center: [f64; 3], r: f64) -> SphereModel {
        SphereModel::resting("ball", ModelSource::Primitive, vec![Sphere::new(center, r)]).unwrap()
    }

    #[test]
    fn object_outside_footprint_gives_zero_frame() {
        let array = TaxelArray::square(8, 64.0, 0.001).unwrap();
        let model = ball([1000.0, 1000.0, 0.0], 10.0);
        let f = simulate_touch(&array, &model, &touch(5.0)).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_slab_interior_is_uniform() {
        // one model sphere directly under every taxel center, plus a wider apron
        let array = TaxelArray::square(8, 64.0, 0.002).unwrap();
        let mut spheres = Vec::new();
        for i in -2..10 {
            for j in -2..10 {
                spheres.push(Sphere::new(
                    [
                        (j as f64 + 0.5) * 8.0 - 32.0,
                        (i as f64 + 0.5) * 8.0 - 32.0,
                        20.0,
                    ],
                    8.0,
                ));
            }
        }
        let model = SphereModel::resting("slab", ModelSource::Primitive, spheres).unwrap();
        let p = 6.0;
        let f = simulate_touch(&array, &model, &touch(p)).unwrap();
        let expected = 0.002 * (p - START_CLEARANCE_MM);
        for v in &f.values {
            assert!((v - expected).abs() < 1e-9, "{v} vs {expected}");
        }
    }

    /// Closed-form force for a taxel over a single model sphere.
    fn sphere_oracle(
        array: &TaxelArray,
        r: f64,
        cx: f64,
        cy: f64,
        depth: f64,
        row: usize,
        col: usize,
    ) -> f64 {
        let (tx, ty) = array.taxel_center(row, col);
        let rt = array.taxel_radius;
        let top = 2.0 * r;
        let rest = top + START_CLEARANCE_MM + rt - depth;
        let rho_sq = (tx - cx).powi(2) + (ty - cy).powi(2);
        let reach = r + rt;
        let mut h = rt;
        if rho_sq < reach * reach {
            h = h.max(r + (reach * reach - rho_sq).sqrt());
        }
        array.stiffness * (h - rest).max(0.0)
    }

    #[test]
    fn single_sphere_under_taxel_matches_oracle_and_symmetry() {
        let array = TaxelArray::square(16, 128.0, 0.001).unwrap();
        let (i, j) = (7usize, 9usize);
        let (cx, cy) = array.taxel_center(i, j);
        let r = 20.0;
        let model = ball([cx, cy, 0.0], r);
        let depth = 12.0;
        let f = simulate_touch(&array, &model, &touch(depth)).unwrap();
        for row in 0..16 {
            for col in 0..16 {
                let want = sphere_oracle(&array, r, cx, cy, depth, row, col);
                assert!((f.at(row, col) - want).abs() < 1e-12);
            }
        }
        let peak = f.at(i, j);
        assert!(f.values.iter().all(|&v| v <= peak));
        // 4-fold symmetry about (i, j)
        for d in 1..6 {
            let a = [
                f.at(i + d, j),
                f.at(i - d, j),
                f.at(i, j + d),
                f.at(i, j - d),
            ];
            assert!(a.iter().all(|&v| (v - a[0]).abs() < 1e-12));
            let next = f.at(i + d + 1, j);
            assert!(next <= a[0]);
            if a[0] > 0.0 {
                assert!(next < a[0] || next == 0.0);
            }
        }
    }

    #[test]
    fn doubling_stiffness_doubles_forces() {
        let mut array = TaxelArray::square(16, 128.0, 0.001).unwrap();
        let model = ball([3.0, -5.0, 0.0], 25.0);
        let t = TouchConfig::new(1.0, 2.0, 30.0, 9.0, 0).unwrap();
        let a = simulate_touch(&array, &model, &t).unwrap();
        array.stiffness *= 2.0;
        let b = simulate_touch(&array, &model, &t).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn translation_by_one_pitch_shifts_frame() {
        let array = TaxelArray::square(16, 128.0, 0.001).unwrap();
        let model = crate::simulator::make_primitive(
            "box",
            &crate::simulator::Primitive::Box {
                size: [30.0, 20.0, 15.0],
            },
            3.0,
        )
        .unwrap();
        let a = simulate_touch(
            &array,
            &model,
            &TouchConfig::new(0.0, 0.0, 20.0, 8.0, 0).unwrap(),
        )
        .unwrap();
        let b = simulate_touch(
            &array,
            &model,
            &TouchConfig::new(0.0, array.pitch, 20.0, 8.0, 0).unwrap(),
        )
        .unwrap();
        for row in 1..15 {
            for col in 1..14 {
                assert!((a.at(row, col) - b.at(row, col + 1)).abs() < 1e-12);
            }
        }
        let c = simulate_touch(
            &array,
            &model,
            &TouchConfig::new(array.pitch, 0.0, 20.0, 8.0, 0).unwrap(),
        )
        .unwrap();
        for row in 1..14 {
            for col in 1..15 {
                assert!((a.at(row, col) - c.at(row + 1, col)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn centered_sphere_is_rotation_invariant() {
        let array = TaxelArray::square(16, 128.0, 0.001).unwrap();
        let model = ball([0.0, 0.0, 0.0], 30.0);
        let base = simulate_touch(&array, &model, &touch(10.0)).unwrap();
        for deg in [5.0, 17.0, 45.0, 90.0, 359.0] {
            let f = simulate_touch(
                &array,
                &model,
                &TouchConfig::new(0.0, 0.0, deg, 10.0, 0).unwrap(),
            )
            .unwrap();
            for (x, y) in base.values.iter().zip(&f.values) {
                assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn touch_validation() {
        assert!(TouchConfig::new(0.0, 0.0, 360.0, 1.0, 0).is_err());
        assert!(TouchConfig::new(0.0, 0.0, 0.0, 0.0, 0).is_err());
        assert!(TaxelArray::new(0, 3, 1.0, 0.5, 1.0).is_err());
        assert!(TaxelArray::new(3, 3, 1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn zero_sigma_is_identity_and_seed_is_deterministic() {
        let array = TaxelArray::square(16, 128.0, 0.001).unwrap();
        let f = simulate_touch(&array, &ball([0.0, 0.0, 0.0], 30.0), &touch(10.0)).unwrap();
        let same = add_noise(&f, 0.0, 1).unwrap();
        assert_eq!(same.values, f.values);
        assert!(same.noisy);
        let a = add_noise(&f, 0.001, 42).unwrap();
        let b = add_noise(&f, 0.001, 42).unwrap();
        assert_eq!(
            a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert!(add_noise(&f, -1.0, 0).is_err());
        assert!(add_noise(&a, 0.001, 0).is_err());
    }

    #[test]
    fn clipped_noise_mean_on_zero_frame() {
        let array = TaxelArray::new(1000, 1000, 1.0, 0.5, 0.001).unwrap();
        let frame = TactileFrame {
            values: vec![0.0; 1_000_000],
            array,
            label: 0,
            perturbation: 0,
            touch: touch(1.0),
            noisy: false,
        };
        let sigma = 0.001;
        let noisy = add_noise(&frame, sigma, 7).unwrap();
        assert!(noisy
            .values
            .iter()
            .all(|&v| (0.0..=SENSOR_MAX_N).contains(&v)));
        let mean = noisy.values.iter().sum::<f64>() / 1e6;
        // E[max(0, g)] for g ~ N(0, sigma^2); standard error of the sample mean ~ 6e-7
        let oracle = sigma / (2.0 * std::f64::consts::PI).sqrt();
        assert!((oracle - 0.000_399).abs() < 1e-6);
        assert!((mean - oracle).abs() < 4e-6, "mean {mean} vs {oracle}");
    }
}
