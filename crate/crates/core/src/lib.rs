pub mod ast;
pub mod dataset;
pub mod eval;
pub mod forge;
pub mod llm;
pub mod numtext;
pub mod scalar;
pub mod symbolic;

pub type Ast = ast::AstNode<i64>;
