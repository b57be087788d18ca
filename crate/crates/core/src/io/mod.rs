pub mod bank;
pub mod depth;
pub mod gann;
pub mod pgm;
pub mod ply;
pub mod predictions;
