pub mod diff;
pub mod jet;
pub mod optimize;
pub mod quadrature;
pub mod special;
