pub mod cli;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod lab;
pub mod net;
pub mod numerics;
pub mod objective;
pub mod optimize;
pub mod profiled;
pub mod report;

#[cfg(test)]
pub(crate) mod test_support;
