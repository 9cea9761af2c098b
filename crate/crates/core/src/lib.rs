pub mod linalg;
pub mod nlp;
pub mod sensitivity;
pub mod ensembles;
pub mod flows;
