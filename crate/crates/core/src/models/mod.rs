//! Additional game families built on the generic instance type.

pub mod cfld;
pub mod qipg;
