//! Teacher-student label generation.
