//! Mixed-language scenario interpreter with Tree Borrows and Stacked Borrows
//! aliasing checks.

pub mod borrows;
pub mod diagnostics;
pub mod ir;
pub mod memory;
pub mod runner;
pub mod machine;
pub mod translate;
pub mod value;
