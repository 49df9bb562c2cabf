from pathlib import Path
from typing import List, Optional

class ValidationError(Exception):
    """Raised when input validation fails"""
    pass

def validate_file_path(file_path: str, must_exist: bool = True) -> Path:
    """Validate an input or output file path
    
    Args:
        file_path: Path to validate
        must_exist: Whether the file must already exist
    
    Returns:
        Resolved Path object
    
    Raises:
        ValidationError: If validation fails
    """
    if not file_path or not str(file_path).strip():
        raise ValidationError("File path cannot be empty")
    
    try:
        path = Path(file_path).expanduser().resolve()
    except Exception as e:
        raise ValidationError(f"Invalid file path: {e}")
    
    if must_exist and not path.exists():
        raise ValidationError(f"Path does not exist: {path}")
    
    if path.exists() and not path.is_file():
        raise ValidationError(f"Path is not a file: {path}")
    
    return path

def validate_directory_path(dir_path: str, must_exist: bool = True, create_if_missing: bool = False) -> Path:
    """Resolve a run or output directory, optionally creating it"""
    if not dir_path or not str(dir_path).strip():
        raise ValidationError("Directory path cannot be empty")
    
    try:
        path = Path(dir_path).expanduser().resolve()
    except Exception as e:
        raise ValidationError(f"Invalid directory path: {e}")
    
    if not path.exists():
        if create_if_missing:
            try:
                path.mkdir(parents=True, exist_ok=True)
            except Exception as e:
                raise ValidationError(f"Cannot create directory {path}: {e}")
        elif must_exist:
            raise ValidationError(f"Directory does not exist: {path}")
    
    if path.exists() and not path.is_dir():
        raise ValidationError(f"Path is not a directory: {path}")
    
    return path

def validate_list_subset(subset: Optional[str], n_lists: Optional[int] = None) -> Optional[List[int]]:
    """Validate a comma-separated subset of 1-based list indices
    
    Args:
        subset: Text such as "1,2"; None or "all" means every list
        n_lists: Number of available lists, if known
    
    Returns:
        Sorted list of distinct indices, or None for all lists
    
    Raises:
        ValidationError: If the subset is malformed or out of range
    """
    if subset is None or subset.strip().lower() in ("", "all"):
        return None
    
    try:
        indices = sorted({int(part) for part in subset.split(",") if part.strip()})
    except ValueError:
        raise ValidationError(f"List subset must be comma-separated integers: {subset}")
    
    if not indices:
        raise ValidationError("List subset cannot be empty")
    
    if indices[0] < 1:
        raise ValidationError("List indices start at 1")
    
    if n_lists is not None and indices[-1] > n_lists:
        raise ValidationError(f"List index {indices[-1]} exceeds number of lists ({n_lists})")
    
    return indices

def validate_seed(seed: int) -> int:
    """Validate a random seed (non-negative integer)"""
    if seed is None or seed < 0:
        raise ValidationError(f"Seed must be a non-negative integer: {seed}")
    return int(seed)

def validate_mcmc_lengths(iterations: int, burnin: int, thin: int) -> None:
    """Validate MCMC run lengths
    
    Raises:
        ValidationError: If no draw would be saved
    """
    if iterations < 1:
        raise ValidationError("Number of iterations must be positive")
    if burnin < 0:
        raise ValidationError("Burn-in cannot be negative")
    if thin < 1:
        raise ValidationError("Thinning interval must be positive")
    if iterations - burnin < thin:
        raise ValidationError(
            f"No draws would be saved with iterations={iterations}, burnin={burnin}, thin={thin}"
        )
