use std::fmt;

/// Failure classes, each with its own exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Internal,
    Usage,
    Config,
    Run,
    Model,
    Validation,
}

impl Category {
    pub fn code(self) -> i32 {
        match self {
            Category::Internal => 1,
            Category::Usage => 2,
            Category::Config => 3,
            Category::Run => 4,
            Category::Model => 5,
            Category::Validation => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Internal => "internal",
            Category::Usage => "usage",
            Category::Config => "config",
            Category::Run => "run",
            Category::Model => "model",
            Category::Validation => "validation",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl fmt::Display) -> Self {
        Self {
            category,
            message: message.to_string(),
        }
    }

    pub fn usage(m: impl fmt::Display) -> Self {
        Self::new(Category::Usage, m)
    }

    pub fn config(m: impl fmt::Display) -> Self {
        Self::new(Category::Config, m)
    }

    pub fn run(m: impl fmt::Display) -> Self {
        Self::new(Category::Run, m)
    }

    pub fn model(m: impl fmt::Display) -> Self {
        Self::new(Category::Model, m)
    }

    pub fn code(&self) -> i32 {
        self.category.code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.category.as_str(), self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(Category::Internal, e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new(Category::Internal, e)
    }
}

impl From<repomine::runner::RunnerError> for CliError {
    fn from(e: repomine::runner::RunnerError) -> Self {
        use repomine::runner::RunnerError;
        match e {
            RunnerError::Config(_) | RunnerError::Accounting(_) => Self::config(e),
            _ => Self::run(e),
        }
    }
}
