pub mod analyze;
pub mod saturate;
pub mod selftest;
pub mod simulate;
