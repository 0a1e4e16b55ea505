use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("path must be absolute")]
    Relative,
    #[error("empty path component")]
    EmptyComponent,
    #[error("'.' and '..' are not allowed as path components")]
    DotComponent,
    #[error("NUL byte in path")]
    Nul,
    #[error("the root has no parent")]
    RootHasNoParent,
}

/// Checks a single name: non-empty, no '/', no NUL, not "." or "..".
pub fn validate_name(name: &str) -> Result<(), PathError> {
    if name.is_empty() {
        return Err(PathError::EmptyComponent);
    }
    if name == "." || name == ".." {
        return Err(PathError::DotComponent);
    }
    if name.contains('\0') {
        return Err(PathError::Nul);
    }
    if name.contains('/') {
        return Err(PathError::EmptyComponent);
    }
    Ok(())
}

/// Absolute path as a list of validated components; no components is the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PathName {
    components: Vec<String>,
}

impl PathName {
    pub fn root() -> Self {
        PathName::default()
    }

    pub fn parse(s: &str) -> Result<Self, PathError> {
        let rest = s.strip_prefix('/').ok_or(PathError::Relative)?;
        if rest.is_empty() {
            return Ok(Self::root());
        }
        let components = rest
            .split('/')
            .map(|c| validate_name(c).map(|_| c.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PathName { components })
    }

    pub fn from_components<I, S>(parts: I) -> Result<Self, PathError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let components = parts
            .into_iter()
            .map(|c| {
                let c = c.into();
                validate_name(&c).map(|_| c)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PathName { components })
    }

    pub fn is_root(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Last component; `None` for the root.
    pub fn name(&self) -> Option<&str> {
        self.components.last().map(String::as_str)
    }

    pub fn parent_of(&self) -> Result<PathName, PathError> {
        if self.is_root() {
            return Err(PathError::RootHasNoParent);
        }
        Ok(PathName {
            components: self.components[..self.components.len() - 1].to_vec(),
        })
    }

    pub fn join(&self, name: &str) -> Result<PathName, PathError> {
        validate_name(name)?;
        let mut components = self.components.clone();
        components.push(name.to_string());
        Ok(PathName { components })
    }

    pub fn starts_with(&self, prefix: &PathName) -> bool {
        self.components.starts_with(&prefix.components)
    }
}

impl fmt::Display for PathName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.components.is_empty() {
            return f.write_str("/");
        }
        for c in &self.components {
            write!(f, "/{c}")?;
        }
        Ok(())
    }
}

impl FromStr for PathName {
    type Err = PathError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PathName::parse(s)
    }
}

impl TryFrom<String> for PathName {
    type Error = PathError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        PathName::parse(&s)
    }
}

impl From<PathName> for String {
    fn from(p: PathName) -> String {
        p.to_string()
    }
}
