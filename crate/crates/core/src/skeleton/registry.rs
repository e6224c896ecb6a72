//! Named skeleton constructors.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::SkeletonProgram;
use crate::dsl::{Binding, DslError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("skeleton `{0}` is already registered")]
    DuplicateName(String),
    #[error("no skeleton named `{0}` (available: {1})")]
    UnknownName(String, String),
    #[error(transparent)]
    Dsl(#[from] DslError),
}

/// What a constructor is asked to build.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Instance {
    /// Rank count; `None` means the workload's default.
    pub ranks: Option<u32>,
    pub params: Binding,
    pub seed: u64,
}

pub type Constructor = Arc<dyn Fn(&Instance) -> Result<SkeletonProgram, DslError> + Send + Sync>;

#[derive(Clone, Default)]
pub struct SkeletonRegistry {
    entries: BTreeMap<String, Constructor>,
}

impl fmt::Debug for SkeletonRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.entries.keys()).finish()
    }
}

impl SkeletonRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_constructor(&mut self, name: &str, ctor: Constructor) -> Result<(), RegistryError> {
        if self.entries.contains_key(name) {
            return Err(RegistryError::DuplicateName(name.to_string()));
        }
        self.entries.insert(name.to_string(), ctor);
        Ok(())
    }

    /// Registers an already built program under its own name. Building it
    /// returns the same program whatever the instance asks for.
    pub fn register(&mut self, program: SkeletonProgram) -> Result<(), RegistryError> {
        let name = program.name().to_string();
        self.register_constructor(&name, Arc::new(move |_| Ok(program.clone())))
    }

    pub fn lookup(&self, name: &str) -> Result<&Constructor, RegistryError> {
        self.entries.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.entries.keys().map(String::as_str).collect();
            RegistryError::UnknownName(name.to_string(), known.join(", "))
        })
    }

    pub fn build(&self, name: &str, instance: &Instance) -> Result<SkeletonProgram, RegistryError> {
        Ok(self.lookup(name)?(instance)?)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::compile_source;

    fn program(name: &str) -> SkeletonProgram {
        compile_source(name, "all tasks synchronize.", 2, &Binding::new(), 0).unwrap()
    }

    #[test]
    fn register_and_lookup() {
        let mut reg = SkeletonRegistry::new();
        reg.register(program("alexnet")).unwrap();
        assert!(reg.lookup("alexnet").is_ok());
        assert_eq!(reg.build("alexnet", &Instance::default()).unwrap().name(), "alexnet");
        assert_eq!(
            reg.register(program("alexnet")),
            Err(RegistryError::DuplicateName("alexnet".into()))
        );
        assert!(matches!(reg.lookup("milc"), Err(RegistryError::UnknownName(..))));
    }
}
