//! Deterministic shelf-picking simulator.

pub mod catalog;
pub mod data;
pub mod events;
pub mod geometry;
pub mod heuristic;
pub mod perception;
pub mod planner;
pub mod primitives;
pub mod rng;
pub mod scoring;
pub mod world;
