//! Sandboxed autograder for MiniML exercises.

pub mod featuregate;
pub mod grader;
pub mod parallel;
pub mod property;
pub mod report;
pub mod runtime;
pub mod syntax;
pub mod vfs;
