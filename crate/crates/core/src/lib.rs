//! Lifelong experiential-learning agent.
//!
//! The agent categorizes each incoming question into a task type, learns
//! textual task-solving experience by transferring it from similar tasks and
//! inducing it from self-generated practice, keeps that experience in a
//! growing [`memory::Memory`], and answers with it. The [`harness`] module
//! runs the agent and baseline methods over mixed multiple-choice datasets.

pub mod config;
pub mod corpus;
pub mod harness;
pub mod http;
pub mod llm;
pub mod memory;
pub mod pipeline;
pub mod retrieval;
