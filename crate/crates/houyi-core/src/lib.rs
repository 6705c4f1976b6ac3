//! Black-box prompt-injection assessment toolkit.
//!
//! The crate has two halves:
//!
//! * a **victim side** — a deterministic simulator of LLM-integrated
//!   applications ([`victim`]), a defense layer ([`defense`]), and a
//!   rule-based mock model plus an HTTP client ([`backend`]);
//! * an **attack side** — context inference ([`context`]), injection prompt
//!   construction ([`builder`]), the feedback-driven attack loop
//!   ([`orchestrator`]), and campaign orchestration with reporting
//!   ([`campaign`], [`suite`]).
//!
//! Everything on the victim side is a pure function of its inputs and a seed,
//! so campaigns replay byte-identically; the attack side observes targets
//! only through [`orchestrator::InjectionTarget`].

pub mod backend;
pub mod builder;
pub mod campaign;
pub mod context;
pub mod data;
pub mod defense;
pub mod orchestrator;
pub mod suite;
pub mod victim;
pub mod words;
