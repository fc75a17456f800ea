pub mod benchmark;
pub mod evaluate;
pub mod export;
pub mod simulate;
pub mod train;
