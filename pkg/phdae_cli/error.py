from phdae_cli.exitcode import EC_ERR_GENERAL, EC_ERR_USAGE


class PhDaeError(Exception):
    """ Base class for phdae errors. """

    exit_code = EC_ERR_GENERAL

    def __init__(self, *args, **kwargs):
        self.message = args[0] if len(args) else ''
        self.hint = kwargs.get('hint') or ''

    def __str__(self):
        return self.message

    hint = ''
    message = ''


class DimensionMismatch(PhDaeError):
    def __init__(self, operation, expected, got):
        self.operation = operation
        self.message = f"Dimension mismatch in {operation}: expected {expected}, got {got}."

    hint = "Check that the state, input and output sizes agree with the model."


class SingularMatrix(PhDaeError):
    def __init__(self, pivot_index, pivot, tolerance):
        self.pivot_index = pivot_index
        self.pivot = pivot
        self.tolerance = tolerance
        self.message = f"Matrix is numerically singular: pivot {pivot_index} " \
                       f"has magnitude {abs(pivot):.3e} <= {tolerance:.3e}."

    hint = "The model is probably not index-1 at this step size, or its parameters are degenerate."


class SingularJacobian(SingularMatrix):
    def __init__(self, cause: SingularMatrix, step=None):
        super().__init__(cause.pivot_index, cause.pivot, cause.tolerance)
        self.at_step(step)

    def at_step(self, step):
        self.step = step
        where = f' at step {step}' if step is not None else ''
        self.message = f"Residual Jacobian E/h - JQ + RQ is singular{where} " \
                       f"(pivot {self.pivot_index}, magnitude {abs(self.pivot):.3e})."
        return self


class SingularAlgebraicBlock(PhDaeError):
    def __init__(self, rows):
        self.rows = list(rows)
        self.message = f"The algebraic block of (J - R)Q on rows {self.rows} cannot be solved " \
                       f"for the algebraic states."

    hint = "Consistent initialization needs an index-1 model; check the zero rows of E."


class NoConvergence(PhDaeError):
    def __init__(self, iterations, last_step_norm, step=None):
        self.iterations = iterations
        self.last_step_norm = last_step_norm
        self.step = step
        where = f' at step {step}' if step is not None else ''
        self.message = f"Newton iteration did not converge{where} after {iterations} iterations " \
                       f"(last |dx| = {last_step_norm:.3e})."

    hint = "Increase 'solver.max_newton_iters' or relax 'solver.epsilon'."


class InvalidParameter(PhDaeError):
    def __init__(self, message):
        self.message = message

    hint = "Physical component values must be strictly positive."


class InsufficientData(PhDaeError):
    def __init__(self, message):
        self.message = message

    hint = "Use a longer record or a shorter truncation length, encoder lag or batch size."


class DegenerateSignal(PhDaeError):
    def __init__(self, message):
        self.message = message

    hint = "A constant signal has zero standard deviation; SNR and NRMS are undefined for it."


class DatasetParseError(PhDaeError):
    def __init__(self, path, line, reason):
        self.path = path
        self.line = line
        self.message = f"Failed to parse dataset '{path}' at line {line}: {reason}"

    hint = "Datasets are comma separated with a header 't,u1,...,y1,...'."


class DatasetIoError(PhDaeError):
    def __init__(self, path, reason):
        self.path = path
        self.message = f"Cannot access dataset '{path}': {reason}"


class ModelFileError(PhDaeError):
    def __init__(self, path, reason):
        self.path = path
        self.message = f"Invalid model file '{path}': {reason}"

    hint = "Model files are written by 'phdae train'."


class SolverFailure(PhDaeError):
    def __init__(self, cause: PhDaeError, epoch=None, batch=None):
        self.cause = cause
        self.epoch = epoch
        self.batch = batch
        context = []
        if epoch is not None:
            context.append(f'epoch {epoch}')
        if batch is not None:
            context.append(f'batch {batch}')
        where = f" ({', '.join(context)})" if context else ''
        self.message = f"Solver failure{where}: {cause}"
        self.hint = cause.hint or "Lower 'train.lr_start' to keep the parameters away from singular models."


class PhDaeConfigError(PhDaeError):
    exit_code = EC_ERR_USAGE

    def __init__(self, config_file, reason=None):
        self.config_file = config_file
        self.message = f"Cannot load configuration file '{config_file}'."
        if reason:
            self.message += f" Reason: {reason}"

    hint = "Run 'phdae generate --help' for the configuration layout."


class PhDaeConfigTypeError(PhDaeError):
    exit_code = EC_ERR_USAGE

    def __init__(self, msg):
        self.message = msg

    hint = "Please check your input configuration file."
