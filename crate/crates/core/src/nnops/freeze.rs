use crate::{Error, Result};

/// Name prefixes whose parameters stay fixed during fine-tuning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FreezeSpec {
    prefixes: Vec<String>,
}

impl FreezeSpec {
    pub fn new<S: Into<String>>(prefixes: impl IntoIterator<Item = S>) -> Result<Self> {
        let prefixes: Vec<String> = prefixes.into_iter().map(Into::into).collect();
        if prefixes.iter().any(String::is_empty) {
            return Err(Error::input("freeze prefixes must be non-empty"));
        }
        Ok(Self { prefixes })
    }

    /// Freezes everything under `backbone`, leaving only the head trainable.
    pub fn backbone() -> Self {
        Self {
            prefixes: vec!["backbone".to_string()],
        }
    }

    pub fn prefixes(&self) -> &[String] {
        &self.prefixes
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.prefixes.iter().any(|p| name.starts_with(p.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreezePlan {
    /// `(name, trainable)` in input order.
    pub params: Vec<(String, bool)>,
    pub frozen_count: usize,
    pub trainable_count: usize,
    /// Prefixes that matched no parameter; reported, not fatal.
    pub unmatched_prefixes: Vec<String>,
}

impl FreezePlan {
    pub fn frozen(&self) -> impl Iterator<Item = &str> {
        self.params.iter().filter(|p| !p.1).map(|p| p.0.as_str())
    }

    pub fn trainable(&self) -> impl Iterator<Item = &str> {
        self.params.iter().filter(|p| p.1).map(|p| p.0.as_str())
    }
}

pub fn freeze_plan<S: AsRef<str>>(names: &[S], spec: &FreezeSpec) -> Result<FreezePlan> {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n.as_ref()) {
            return Err(Error::input(format!("duplicate parameter name `{}`", n.as_ref())));
        }
    }
    let params: Vec<(String, bool)> = names
        .iter()
        .map(|n| (n.as_ref().to_string(), !spec.is_frozen(n.as_ref())))
        .collect();
    let frozen_count = params.iter().filter(|p| !p.1).count();
    let unmatched_prefixes = spec
        .prefixes
        .iter()
        .filter(|p| !names.iter().any(|n| n.as_ref().starts_with(p.as_str())))
        .cloned()
        .collect();
    Ok(FreezePlan {
        trainable_count: params.len() - frozen_count,
        frozen_count,
        params,
        unmatched_prefixes,
    })
}
