from enum import IntEnum
import numpy as np

__all__ = ["CpgError", "ArgumentError", "ShapeError", "DataError", "FormatError", "UnsupportedError",
           "TrainingError", "MapType", "TypedMap", "LabelMap", "ProbMap", "LogitMap", "GradField",
           "require_same_shape", "float_dtype_of"]


class CpgError(Exception): pass
class ArgumentError(CpgError, ValueError): pass
class ShapeError(CpgError, ValueError): pass
class DataError(CpgError, ValueError): pass
class FormatError(CpgError): pass
class UnsupportedError(CpgError): pass


class TrainingError(CpgError):
    def __init__(self, message, step=None):
        super(TrainingError, self).__init__(message)
        self.step = step


class MapType(IntEnum):
    Labels = 1  # [H, W] class indices
    GroundTruth = 2  # [C, H, W] one-hot probabilities
    Predicted = 3  # [C, H, W] softmax probabilities
    Logits = 4  # [C, H, W] raw network output
    Gradient = 5  # [C, 2, H, W] per-category, per-direction gradients
    Mask = 6  # [C, 2, H, W] 0/1 boundary mask


class TypedMap(np.ndarray):
    maptypes = ()
    ndim_required = None

    class Unknown(CpgError): pass

    def __new__(cls, input_array, map_type, dtype=None):
        """
        Create instance of appropriate TypedMap subclass using map_type.
        :param input_array: anything np.asarray() accepts.
        :param map_type: member of MapType selecting the subclass.
        :param dtype: numpy dtype, defaults to the subclass default_numpy_type().
        """
        subclass = cls.get_subclass(map_type)
        if subclass:
            obj = np.asarray(input_array).view(subclass)
            obj.map_type = map_type
            if subclass.ndim_required is not None and obj.ndim != subclass.ndim_required:
                raise ShapeError("{} requires {} axes, got shape {}".format(
                    map_type.name, subclass.ndim_required, tuple(obj.shape)))
            if dtype:
                return obj.astype(dtype)
            return obj.astype(obj.default_numpy_type(obj.dtype))

        raise TypedMap.Unknown('ERROR: class "MapType.{}" is not defined.'.format(map_type.name))

    def __array_finalize__(self, obj):
        if obj is None: return
        self.map_type = getattr(obj, 'map_type', None)

    def __reduce__(self):
        pickled_state = super(TypedMap, self).__reduce__()
        new_state = pickled_state[2] + (self.__dict__,)
        return (pickled_state[0], pickled_state[1], new_state)

    def __setstate__(self, state):
        self.__dict__.update(state[-1])
        super(TypedMap, self).__setstate__(state[0:-1])

    @classmethod
    def default_numpy_type(cls, source_dtype):
        """
        :param source_dtype: dtype of the array being wrapped.
        :return: dtype the map is stored with. Float maps keep float64 input as float64 and
                 store everything else as float32.
        """
        if source_dtype == np.float64:
            return np.float64
        return np.float32

    @classmethod
    def _get_all_subclasses(cls):
        """ Recursive generator of all class' subclasses. """
        for subclass in cls.__subclasses__():
            yield subclass
            for subclass in subclass._get_all_subclasses():
                yield subclass

    @classmethod
    def get_subclass(cls, map_type):
        for subclass in TypedMap._get_all_subclasses():
            if map_type in subclass.maptypes:
                return subclass
        return None

    @property
    def num_classes(self):
        return self.shape[0]

    @property
    def spatial_shape(self):
        return tuple(self.shape[-2:])

    def plain(self):
        """
        :return: the underlying data as a plain ndarray (no copy).
        """
        return np.asarray(self)


class LabelMap(TypedMap):
    maptypes = (MapType.Labels,)
    ndim_required = 2
    ignore_index = 255
    num_labels = None

    @classmethod
    def default_numpy_type(cls, source_dtype):
        return np.int32

    @classmethod
    def create(cls, labels, num_classes, ignore_index=255):
        """
        Wrap a 2-D integer array as a LabelMap and validate its contents.
        :param labels: [H, W] integer array.
        :param num_classes: number of categories C.
        :param ignore_index: label value excluded from losses and metrics, None to disable.
        :return: LabelMap
        """
        if num_classes < 1:
            raise ArgumentError("num_classes must be >= 1, got {}".format(num_classes))
        raw = np.asarray(labels)
        if raw.size and not np.issubdtype(raw.dtype, np.integer):
            if not np.all(np.equal(np.mod(raw, 1), 0)):
                raise DataError("label map contains non-integer values")
        lm = TypedMap(raw, MapType.Labels)
        lm.num_labels = int(num_classes)
        lm.ignore_index = ignore_index
        lm.validate()
        return lm

    def __array_finalize__(self, obj):
        super(LabelMap, self).__array_finalize__(obj)
        if obj is None: return
        self.num_labels = getattr(obj, 'num_labels', None)
        self.ignore_index = getattr(obj, 'ignore_index', 255)

    @property
    def num_classes(self):
        return self.num_labels

    @property
    def spatial_shape(self):
        return tuple(self.shape)

    def valid_mask(self):
        """
        :return: boolean [H, W] array, True where the pixel is not ignored.
        """
        if self.ignore_index is None:
            return np.ones(self.shape, dtype=bool)
        return np.asarray(self) != self.ignore_index

    def validate(self):
        v = np.asarray(self)
        valid = self.valid_mask()
        bad = valid & ((v < 0) | (v >= self.num_labels))
        if np.any(bad):
            first = np.argwhere(bad)[0]
            raise DataError("label {} at {} is outside [0, {}) and is not the ignore index {}".format(
                int(v[tuple(first)]), tuple(int(i) for i in first), self.num_labels, self.ignore_index))
        return True


class ProbMap(TypedMap):
    maptypes = (MapType.GroundTruth, MapType.Predicted)
    ndim_required = 3

    @property
    def is_ground_truth(self):
        return self.map_type == MapType.GroundTruth


class LogitMap(TypedMap):
    maptypes = (MapType.Logits,)
    ndim_required = 3

    @classmethod
    def create(cls, logits, dtype=None):
        """
        Wrap raw logits, rejecting NaN/Inf.
        :param logits: [C, H, W] float array.
        :param dtype: optional numpy dtype override.
        :return: LogitMap
        """
        lm = TypedMap(logits, MapType.Logits, dtype=dtype)
        if not np.all(np.isfinite(np.asarray(lm))):
            raise DataError("logits contain non-finite values")
        return lm


class GradField(TypedMap):
    maptypes = (MapType.Gradient, MapType.Mask)
    ndim_required = 4

    @property
    def gx(self):
        return np.asarray(self)[:, 0]

    @property
    def gy(self):
        return np.asarray(self)[:, 1]


def require_same_shape(a, b, what_a="a", what_b="b"):
    """
    Raise ShapeError naming both shapes when they differ.
    """
    if tuple(np.shape(a)) != tuple(np.shape(b)):
        raise ShapeError("{} shape {} does not match {} shape {}".format(
            what_a, tuple(np.shape(a)), what_b, tuple(np.shape(b))))


def float_dtype_of(*arrays):
    """
    :return: float64 if any input is float64, else float32.
    """
    for a in arrays:
        if np.asarray(a).dtype == np.float64:
            return np.float64
    return np.float32
