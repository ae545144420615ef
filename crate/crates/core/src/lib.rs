//! Unsupervised structure discovery for computer-generated text reports.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`scoring`] compares two lines and scores how alike their formatting is.
//! 2. [`templates`] clusters the lines of a sample into templates (line formats)
//!    and turns the document into a template number series.
//! 3. [`hierarchy`] finds the nested repeating patterns in that series and
//!    renders them as a document structure string such as
//!    `[[5, [6, 7], 8], 9] / [0, 1, 2, 3, 4]`.
//! 4. [`extraction`] derives an extraction plan from the templates and the
//!    hierarchy and turns the document into records.
//!
//! [`pipeline`] ties the stages together for the `docstruct` command line
//! tool and [`chart`] renders series and score files as SVG.
//!
//! [`testkit`] generates synthetic documents with known structure and holds
//! brute-force oracles used by the tests.

pub mod chart;
pub mod error;
pub mod extraction;
pub mod hierarchy;
pub mod pipeline;
pub mod scoring;
pub mod templates;
pub mod testkit;

pub use error::{Error, Result};
