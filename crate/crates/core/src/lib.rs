//! Moment relaxations of polynomial optimal control problems built on
//! occupation measures, with polynomial controller extraction and closed-loop
//! validation.

pub mod conic;
pub mod moments;
pub mod ocp;
pub mod poly;
pub mod relaxation;
pub mod sdp;
pub mod exec;
pub mod synthesis;
pub mod pipeline;
