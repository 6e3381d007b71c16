pub mod censoring;
pub mod compare;
pub mod contraction;
pub mod hanging;
pub mod mc;
