"""
Các lớp lỗi dùng chung cho toàn bộ package
"""

from typing import Optional


class IwinError(Exception):
    """Lỗi gốc của package"""


class ShapeError(IwinError, ValueError):
    """Kích thước tensor không hợp lệ (cạnh lẻ, không chia hết...)"""


class DimensionError(ShapeError):
    """Hai tensor không khớp kích thước trong phép toán"""

    def __init__(self, op: str, shape_a, shape_b):
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b)
        super().__init__(f"{op}: incompatible shapes {self.shape_a} and {self.shape_b}")


class LayoutError(ShapeError):
    """Window layout không chia hết kích thước feature map"""

    def __init__(self, message: str, stage: Optional[int] = None):
        self.stage = stage
        if stage is not None:
            message = f"stage {stage}: {message}"
        super().__init__(message)


class BoundsError(IwinError, IndexError):
    """Vị trí nằm ngoài lưới"""


class ConfigError(IwinError, ValueError):
    """Siêu tham số không hợp lệ"""


class NumericError(IwinError, ArithmeticError):
    """Giá trị không hữu hạn (nan/inf)"""


class ContractError(IwinError, RuntimeError):
    """Gọi API sai cách"""
