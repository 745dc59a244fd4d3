pub mod autograd;
pub mod layers;
pub mod params;
pub mod model;
pub mod trainer;
