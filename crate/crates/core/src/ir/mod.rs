//! Scenario intermediate representation: types, layouts, the statement AST,
//! the text parser and a renderer back to text.

mod ast;
mod layout;
mod parse;
mod render;
mod types;

pub use ast::*;
pub use layout::{align_up, coalesce, layout_of, Layout, LayoutError, POINTER_SIZE};
pub use parse::{parse_scenario, ParseError, ParseErrorKind};
pub use render::{render_program, render_stmt};
pub use types::*;
