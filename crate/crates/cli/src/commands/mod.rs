pub mod evaluate;
pub mod gen;
pub mod grad_check;
pub mod predict;
pub mod toy_bench;
pub mod train;

mod io;
