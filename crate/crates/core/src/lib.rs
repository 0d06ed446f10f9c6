pub mod cone;
pub mod error;
pub mod field;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod spd;
