import pytest
import tempfile
from pathlib import Path

from linkmse.core.validation import (
    ValidationError,
    validate_directory_path,
    validate_file_path,
    validate_list_subset,
    validate_mcmc_lengths,
    validate_seed,
)


class TestValidation:
    """Test input validation functions"""

    def test_validate_file_path_valid(self):
        """Test valid file path validation"""
        with tempfile.NamedTemporaryFile() as temp_file:
            path = validate_file_path(temp_file.name, must_exist=True)
            assert path.exists()
            assert path.is_file()

    def test_validate_file_path_nonexistent(self):
        """Test validation of non-existent file"""
        with pytest.raises(ValidationError, match="Path does not exist"):
            validate_file_path("/nonexistent/file.csv", must_exist=True)

    def test_validate_file_path_output(self):
        """Test an output path that does not exist yet"""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = validate_file_path(str(Path(temp_dir) / "draws.txt"), must_exist=False)
            assert path.name == "draws.txt"

    def test_validate_file_path_directory(self):
        """Test validation when path is directory but file expected"""
        with tempfile.TemporaryDirectory() as temp_dir:
            with pytest.raises(ValidationError, match="Path is not a file"):
                validate_file_path(temp_dir, must_exist=True)

    def test_validate_file_path_empty(self):
        """Test validation of empty file path"""
        with pytest.raises(ValidationError, match="File path cannot be empty"):
            validate_file_path("")

    def test_validate_directory_path_create(self):
        """Test directory creation"""
        with tempfile.TemporaryDirectory() as temp_dir:
            new_dir = Path(temp_dir) / "run" / "average"
            path = validate_directory_path(str(new_dir), must_exist=False, create_if_missing=True)
            assert path.is_dir()

    def test_validate_directory_path_missing(self):
        """Test a required directory that does not exist"""
        with pytest.raises(ValidationError, match="Directory does not exist"):
            validate_directory_path("/nonexistent/candidates")

    def test_validate_directory_path_is_file(self):
        """Test a file passed where a directory is expected"""
        with tempfile.NamedTemporaryFile() as temp_file:
            with pytest.raises(ValidationError, match="Path is not a directory"):
                validate_directory_path(temp_file.name)


class TestListSubset:
    """Test list subset parsing"""

    @pytest.mark.parametrize("text", [None, "", "all", " ALL "])
    def test_all_lists(self, text):
        """Test spellings meaning every list"""
        assert validate_list_subset(text, 3) is None

    def test_subset_sorted_unique(self):
        """Test a subset is sorted and deduplicated"""
        assert validate_list_subset("3,1,3", 3) == [1, 3]

    def test_subset_out_of_range(self):
        """Test indices beyond the number of lists"""
        with pytest.raises(ValidationError, match="exceeds number of lists"):
            validate_list_subset("1,4", 3)

    def test_subset_zero(self):
        """Test indices start at 1"""
        with pytest.raises(ValidationError, match="List indices start at 1"):
            validate_list_subset("0,1")

    def test_subset_malformed(self):
        """Test non-integer entries"""
        with pytest.raises(ValidationError, match="comma-separated integers"):
            validate_list_subset("1,two")


class TestRunParameters:
    """Test seed and MCMC length validation"""

    def test_seed(self):
        """Test seed validation"""
        assert validate_seed(42) == 42
        with pytest.raises(ValidationError, match="non-negative"):
            validate_seed(-1)

    def test_mcmc_lengths_valid(self):
        """Test lengths that save draws"""
        validate_mcmc_lengths(10000, 1000, 5)
        validate_mcmc_lengths(10, 0, 10)

    @pytest.mark.parametrize("iterations,burnin,thin,message", [
        (0, 0, 1, "iterations must be positive"),
        (10, -1, 1, "Burn-in cannot be negative"),
        (10, 0, 0, "Thinning interval must be positive"),
        (100, 100, 1, "No draws would be saved"),
    ])
    def test_mcmc_lengths_invalid(self, iterations, burnin, thin, message):
        """Test lengths that are rejected"""
        with pytest.raises(ValidationError, match=message):
            validate_mcmc_lengths(iterations, burnin, thin)
