#![allow(dead_code)]
pub mod closure;
pub mod dumps;
