pub mod change;
pub mod class_balance;
pub mod classifier;

pub use change::{build_subsequences, change_grid, change_scores, top_peaks, ChangeConfig, ChangeScoreSeries, Scorer, SubsequenceSet};
pub use class_balance::{
    class_balance_estimate, class_balance_estimate_kde, default_pi_grid, ClassBalanceResult, LabeledSet,
};
pub use classifier::{weighted_rls_fit, RlsClassifier};
