//! Geodesic X-ray tomography on conformal surfaces with conjugate points.
pub mod adjoint;
pub mod error;
pub mod geodesic;
pub mod grid;
pub mod inversion;
pub mod io;
pub mod jacobi;
pub mod metric;
pub mod vec2;
pub mod xray;

pub use error::{Error, Result};
pub use adjoint::{artifact_pipeline, normal_op, ArtifactOptions, ArtifactReport, DirectionGrid, NormalOperator, RayTable};
pub use grid::{GridFunction, Sinogram, SinogramDims};
pub use inversion::{
    cancellation_pipeline, conjugate_chain, double_lens, null_triple, AttenuatedOptions, AttenuatedSystem, CancellationOptions, CancellationReport, NeumannOptions,
    NullTriple, SimpleSubdomain, SubdomainInverter,
};
pub use io::Crgrid;
pub use jacobi::{conjugate_locus, integrate_jacobi, ConjugateEvent, ConjugateLocus, ScalarJacobiPair};
pub use geodesic::{shoot, Disk, FanBeamCoord, GeodesicPath, Orientation, TraceOptions};
pub use metric::{ConformalFactor, ConformalMetric, LensSum, MetricKind};
pub use vec2::{Covec2, Point, Vec2};
pub use xray::{forward, Blob, ForwardPlan, Sigma, WeightSpec};
