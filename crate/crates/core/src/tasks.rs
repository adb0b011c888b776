//! The bundled benchmark task descriptions.

use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: String,
    pub title: String,
    pub description: String,
}

const BUNDLED: &[(&str, &str, &str)] = &[
    (
        "cart-pole",
        "Cart-Pole",
        include_str!("../assets/tasks/cart-pole.txt"),
    ),
    (
        "mountain-car",
        "Mountain-Car",
        include_str!("../assets/tasks/mountain-car.txt"),
    ),
    (
        "wireless",
        "Wireless",
        include_str!("../assets/tasks/wireless.txt"),
    ),
    (
        "drone-delivery",
        "Drone-Delivery",
        include_str!("../assets/tasks/drone-delivery.txt"),
    ),
    (
        "inventory",
        "Inventory-Management",
        include_str!("../assets/tasks/inventory.txt"),
    ),
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaskError {
    #[error("task `{0}` is neither a bundled task nor a readable description file")]
    NotFound(String),
    #[error("task description `{0}` is empty")]
    Empty(String),
}

pub fn bundled_ids() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(id, _, _)| *id)
}

pub fn bundled() -> Vec<Task> {
    BUNDLED
        .iter()
        .map(|(id, title, text)| Task {
            id: id.to_string(),
            title: title.to_string(),
            description: text.trim().to_string(),
        })
        .collect()
}

/// A bundled task id, or a path to a description file (the file stem
/// becomes the task id).
pub fn resolve(reference: &str) -> Result<Task, TaskError> {
    if let Some(task) = bundled().into_iter().find(|t| t.id == reference) {
        return Ok(task);
    }
    let path = Path::new(reference);
    let text =
        std::fs::read_to_string(path).map_err(|_| TaskError::NotFound(reference.to_string()))?;
    if text.trim().is_empty() {
        return Err(TaskError::Empty(reference.to_string()));
    }
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("task")
        .to_string();
    Ok(Task {
        title: id.clone(),
        id,
        description: text.trim().to_string(),
    })
}
