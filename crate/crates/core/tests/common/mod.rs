#![allow(dead_code)]

pub mod extended;
pub mod gradcase;
pub mod oracles;
