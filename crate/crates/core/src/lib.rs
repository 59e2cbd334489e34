//! Sequential parameter optimization: designs, surrogate models, response
//! surface analysis, box-constrained optimizers and the tuning engine.

pub mod design;
pub mod error;
pub mod objectives;
pub mod optim;
pub mod rsm;
pub mod space;
pub mod spot;
pub mod surrogates;

pub use error::{Error, Result};
pub use space::{ParamSpace, VarType};
