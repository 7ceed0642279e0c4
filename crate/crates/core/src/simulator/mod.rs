//! Quasistatic tactile array simulation over union-of-spheres objects.

mod dataset;
mod model;
mod touch;

pub use dataset::{generate_dataset, PerturbationGrid};
pub use model::{
    make_primitive, spheres_from_vertices, ModelSource, Primitive, Sphere, SphereModel,
};
pub use touch::{
    add_noise, simulate_touch, TactileFrame, TaxelArray, TouchConfig, DEFAULT_EXTENT_MM,
    DEFAULT_NOISE_SIGMA, DEFAULT_PRESS_DEPTH, DEFAULT_STIFFNESS, SENSOR_MAX_N, START_CLEARANCE_MM,
};
