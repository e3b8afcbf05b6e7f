pub mod circuit;
pub mod gates;
pub mod modes;
pub mod signals;
pub mod testkit;
pub mod threshold;
