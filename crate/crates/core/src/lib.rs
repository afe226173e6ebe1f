pub mod allocator;
pub mod automaton;
pub mod clean;
pub mod cli;
pub mod corpus;
pub mod dedup;
pub mod hash;
pub mod io;
pub mod normalize;
pub mod pipeline;
pub mod sample;
pub mod synth;
pub mod text;
pub mod tokenizer;
pub mod toxicity;
