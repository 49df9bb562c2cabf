class LinkMSEError(Exception):
    """Base exception for linkmse errors"""
    pass

class ConfigError(LinkMSEError):
    """Invalid or incomplete configuration file"""
    pass

class IngestError(LinkMSEError):
    """Record lists could not be loaded or standardized"""
    pass

class ComparisonError(LinkMSEError):
    """Comparison data could not be built"""
    pass

class LinkageError(LinkMSEError):
    """Invalid linkage state or sampler input"""
    pass

class InstanceTooLargeError(LinkageError):
    """Exact enumeration requested on an instance that is too large"""
    pass

class EstimationError(LinkMSEError):
    """Population size estimation failed"""
    pass

class DiagnosticsError(LinkMSEError):
    """Chain diagnostics could not be computed"""
    pass

class DegenerateChainError(DiagnosticsError):
    """Chain (or one of its windows) has zero variance"""
    pass

class StageError(LinkMSEError):
    """Pipeline stage failure, tagged with the stage name"""
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")
