pub mod action;
pub mod env;
pub mod nn;
pub mod oracle;
pub mod pipeline;
pub mod task;
pub mod visual;
