//! Collapsible pushdown systems with annotated stacks: runs, the history
//! function, well-formed run grammars, stack types, pumping and decisions.

pub mod bundled;
pub mod decide;
pub mod export;
pub mod history;
pub mod machine;
pub mod par;
pub mod pumping;
pub mod run_classes;
pub mod stack_core;
pub mod text;
pub mod tower;
pub mod type_engine;
