//! Name-keyed registry of strategy factories.
//!
//! Backends, policy rules and clarification handlers are all selected at
//! runtime by a short name (`replay`, `threshold`, ...). Each family owns a
//! [`Registry`] that maps the name to a factory producing a boxed trait
//! object.

use std::collections::BTreeMap;
use std::fmt;

/// Factory signature: takes the argument that followed the `name:` prefix
/// in a selector string (empty when absent) plus family-specific settings.
pub type Factory<T, S> = Box<dyn Fn(&str, &S) -> Result<Box<T>, String> + Send + Sync>;

pub struct Registry<T: ?Sized, S> {
    family: &'static str,
    factories: BTreeMap<String, Factory<T, S>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("unknown {family} `{name}` (known: {known})")]
    Unknown {
        family: &'static str,
        name: String,
        known: String,
    },
    #[error("cannot build {family} `{name}`: {reason}")]
    Build {
        family: &'static str,
        name: String,
        reason: String,
    },
}

impl<T: ?Sized, S> Registry<T, S> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            factories: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: &str, factory: F) -> &mut Self
    where
        F: Fn(&str, &S) -> Result<Box<T>, String> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    /// Builds from a selector of the form `name` or `name:argument`.
    pub fn create(&self, selector: &str, settings: &S) -> Result<Box<T>, RegistryError> {
        let (name, arg) = match selector.split_once(':') {
            Some((name, arg)) => (name, arg),
            None => (selector, ""),
        };
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| RegistryError::Unknown {
                family: self.family,
                name: name.to_string(),
                known: self.names().collect::<Vec<_>>().join(", "),
            })?;
        factory(arg, settings).map_err(|reason| RegistryError::Build {
            family: self.family,
            name: name.to_string(),
            reason,
        })
    }
}

impl<T: ?Sized, S> fmt::Debug for Registry<T, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("family", &self.family)
            .field("names", &self.names().collect::<Vec<_>>())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter {
        fn greet(&self) -> String;
    }

    struct Plain(String);

    impl Greeter for Plain {
        fn greet(&self) -> String {
            format!("hello {}", self.0)
        }
    }

    fn registry() -> Registry<dyn Greeter, ()> {
        let mut reg: Registry<dyn Greeter, ()> = Registry::new("greeter");
        reg.register("plain", |arg, _| {
            if arg == "bad" {
                return Err("bad argument".into());
            }
            Ok(Box::new(Plain(arg.to_string())))
        });
        reg
    }

    #[test]
    fn selector_argument_is_forwarded() {
        let g = registry().create("plain:world", &()).unwrap();
        assert_eq!(g.greet(), "hello world");
    }

    #[test]
    fn argument_may_contain_colons() {
        let g = registry().create("plain:a:b", &()).unwrap();
        assert_eq!(g.greet(), "hello a:b");
    }

    #[test]
    fn unknown_name_lists_known() {
        let err = registry().create("fancy", &()).err().unwrap();
        assert_eq!(err.to_string(), "unknown greeter `fancy` (known: plain)");
    }

    #[test]
    fn factory_errors_surface() {
        let err = registry().create("plain:bad", &()).err().unwrap();
        assert!(matches!(err, RegistryError::Build { .. }));
    }
}
