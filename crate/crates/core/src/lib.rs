pub mod poly;
pub mod system;
pub mod sos;
pub mod certify;
pub mod synth;
pub mod runtime;
