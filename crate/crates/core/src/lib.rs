//! Spiking graph convolution for semi-supervised node classification.
//!
//! Features are propagated once over the normalized graph, `H = S^K X`, then
//! each node's row is rate-coded into Bernoulli spike trains and classified by
//! a single leaky integrate-and-fire layer trained with surrogate gradients.

pub mod bounds;
pub mod dataset;
pub mod energy;
pub mod error;
pub mod graph;
pub mod neuron;
pub mod rng;
pub mod synthetic;
pub mod train;

pub use bounds::{analyze, audit_model, empirical_tails, BoundReport, ModelAudit, TailBound};
pub use dataset::{
    load_content_cites, make_split, scale_features, Dataset, FeatureScaling, SplitMode, SplitSpec,
};
pub use energy::{format_sci, 
    count_dense_reference, count_inference, estimate_energy, EnergyReport, OpCounter, PlatformSpec,
};
pub use error::{Error, Result};
pub use graph::{
    build_graph, normalize, propagate, propagate_node, FeatureMatrix, PropagatedFeatures,
    SparseGraph,
};
pub use neuron::{
    bernoulli_encode, forward, predict, FireMode, FiringRate, LifLayer, NeuronConfig, SpikeTrain,
};
pub use train::{evaluate, train, train_on_features, OptimizerKind, TrainConfig, TrainReport};
