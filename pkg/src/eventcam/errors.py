"""Exception hierarchy shared by all eventcam modules."""


class EventcamError(Exception):
    """Base class for all errors raised by this package."""


# --- dataset ---

class EmptyDataset(EventcamError):
    pass


class UnreadableRoot(EventcamError):
    pass


class CorruptImage(EventcamError):
    def __init__(self, sample_id, reason=""):
        self.sample_id = sample_id
        super().__init__(f"cannot decode image {sample_id!r}" + (f": {reason}" if reason else ""))


class EmptySplit(EventcamError):
    pass


# --- model ---

class ConfigError(EventcamError):
    pass


class UnknownBackbone(EventcamError):
    pass


class UnknownLayer(EventcamError):
    def __init__(self, layer, available):
        self.layer = layer
        self.available = list(available)
        super().__init__(f"layer {layer!r} not found; available: {', '.join(self.available)}")


class ClassCountMismatch(EventcamError):
    pass


class DivergedLoss(EventcamError):
    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"non-finite training loss at epoch {epoch}")


class ShapeMismatch(EventcamError):
    pass


# --- explainer ---

class UnknownClass(EventcamError):
    pass


class NonFiniteGradient(EventcamError):
    pass


class UnsupportedHead(EventcamError):
    pass


class SizeMismatch(EventcamError):
    pass


class ParamError(EventcamError):
    pass


# --- study ---

class MissingOverlay(EventcamError):
    def __init__(self, sample_ids):
        self.sample_ids = list(sample_ids)
        super().__init__(f"missing overlays for {len(self.sample_ids)} sample(s): "
                         + ", ".join(self.sample_ids[:5]))


class EmptyStudy(EventcamError):
    pass


class UnknownStudy(EventcamError):
    pass


class UnknownAnnotator(EventcamError):
    pass


class DuplicateVote(EventcamError):
    pass


class InvalidLabel(EventcamError):
    pass


class ResolvedTask(EventcamError):
    pass


class NoResolvedTasks(EventcamError):
    pass
