pub mod evalkit;
pub mod idiomdata;
pub mod knnstore;
pub mod numerics;
pub mod sweep;
pub mod synlang;
pub mod trainer;
pub mod transformer;
