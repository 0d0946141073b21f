//! Offline evaluation workbench for rating-based recommender systems.
//!
//! A model is judged on four functions, each with its own measures and each
//! broken down by heavy/light users and popular/unpopular items:
//!
//! * **Decide**: rating prediction, RMSE.
//! * **Compare**: pairwise ordering of a user's test items, COMP.
//! * **Discover**: top-N recommendation, Precision and the Average Measure
//!   of Impact (AMI), which rewards relevant recommendations of rare items.
//! * **Explore**: item-to-item navigation. The model's item similarity
//!   matrix drives a KNN model that is evaluated on the three functions above.
//!
//! Four reference models are included: item-item KNN with Weighted Pearson
//! similarity, biased matrix factorization trained by SGD, a mean-based
//! default predictor and a uniform random predictor.

pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod fixtures;
pub mod knn;
pub mod manifest;
pub mod metrics;
pub mod mf;
pub mod protocol;
pub mod report;

pub use baselines::{default_predict, random_predict, DefaultPredictor, Predictor, RandomPredictor};
pub use dataset::{
    load_dataset, split, DatasetFormat, ItemIdx, RatingLog, RatingScale, Segment, SegmentModel,
    SplitDataset, UserIdx,
};
pub use knn::{build_similarity_matrix, knn_predict, weighted_pearson, KnnModel, SimilarityMatrix};
pub use metrics::{ami_user, comp_user, precision_user, rmse, MetricTable};
pub use mf::{mf_item_similarity, mf_predict, train_mf, FactorModel, MfConfig, MfModel};
pub use protocol::{evaluate, generate_top_n, run_core, run_explore, ProtocolConfig};
pub use report::{compare_reports, EvaluationReport};
