//! Semi-Markov and indexed semi-Markov models of high-frequency returns.
//!
//! The pipeline runs from tick data to minute prices ([`ingestion`]),
//! discrete return states ([`discretization`]), the Markov renewal sample
//! and its kernel ([`smc`]), volatility indices over past sojourns
//! ([`index`]), index-conditioned kernels ([`indexed_kernel`]), seeded Monte
//! Carlo trajectories ([`simulate`]) and autocorrelation diagnostics
//! ([`diagnostics`]). Numeric types are generic over [`Real`] (`f32` or
//! `f64`); the aliases below fix the scalar to `f64`.

pub mod diagnostics;
pub mod discretization;
pub mod error;
pub mod index;
pub mod indexed_kernel;
pub mod ingestion;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod simulate;
pub mod smc;
pub mod synthetic;

pub use diagnostics::{AcfCurve, AcfOptions, SweepConfig, SweepPoint, SweepResult};
pub use discretization::{GridMode, IndexGrid, ReturnGrid, StateSeries};
pub use error::{Error, ErrorClass, Result};
pub use index::{IndexConfig, IndexKind, IndexSeries, RateFunction};
pub use indexed_kernel::{IndexedEstimateOptions, IndexedKernel};
pub use ingestion::{InputFormat, PriceSeries, RawReturnSeries, TickRecord, TickSeries, TradingCalendar};
pub use model::{FitOptions, FittedModel, ModelKind};
pub use pipeline::{run_pipeline, RunConfig, Stage};
pub use scalar::Real;
pub use simulate::{SimulationConfig, Trajectory, Warmup};
pub use smc::{ExtractOptions, MarkovRenewalSample, SemiMarkovKernel, TransitionTable};
pub use synthetic::SyntheticGeneratorSpec;

pub type Kernel = SemiMarkovKernel<f64>;
pub type Kernel32 = SemiMarkovKernel<f32>;
pub type IndexedKernel64 = IndexedKernel<f64>;
pub type States = StateSeries<f64>;
pub type Grid = ReturnGrid<f64>;
pub type Prices = PriceSeries<f64>;
pub type Returns = RawReturnSeries<f64>;
pub type Ticks = TickSeries<f64>;
pub type Index = IndexSeries<f64>;
pub type Path = Trajectory<f64>;
pub type Acf = AcfCurve<f64>;
pub type Table = TransitionTable<f64>;
