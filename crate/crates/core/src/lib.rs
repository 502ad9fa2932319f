//! Test-set reweighting for gender-bias metrics on pronoun coreference data.
//!
//! Examples are reweighted so both gender groups carry equal total weight and
//! every chosen property set is equally represented in both groups, while
//! keeping the weights as flat as possible. Bias metrics computed under those
//! weights are less sensitive to accidental imbalance in the test set.

pub mod balancer;
pub mod baselines;
pub mod data;
pub mod lp;
pub mod metrics;
pub mod oracle;
pub mod report;
pub mod significance;
pub mod solver;
