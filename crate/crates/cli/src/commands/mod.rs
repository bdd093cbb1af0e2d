pub mod check_theory;
pub mod eval;
pub mod gen_data;
pub mod report;
pub mod train;
