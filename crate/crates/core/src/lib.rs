pub mod ellipsoids;
pub mod error;
pub mod io;
pub mod linmat;
pub mod lmi;
pub mod norms;
pub mod plants;
pub mod quad;
pub mod random;
pub mod search;
pub mod simulate;
pub mod synth;
pub mod sysmodel;

pub use error::{Error, Result};
