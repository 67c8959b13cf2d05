from phdae_cli import create_logger

console_logger = create_logger(__name__)


class TrainEventHandler:
    def handle_run_start(self, epochs, batches_per_epoch):
        pass

    def handle_epoch_start(self, epoch, lr):
        pass

    def handle_batch_end(self, epoch, batch, loss):
        pass

    def handle_epoch_end(self, record, improved):
        pass

    def handle_retry(self, epoch, batch, lr, error):
        pass

    def handle_run_end(self, state):
        pass


class DefaultTrainEventHandler(TrainEventHandler):
    def __init__(self):
        self.epochs = 0

    def handle_run_start(self, epochs, batches_per_epoch):
        self.epochs = epochs
        console_logger.info(f'training for {epochs} epochs of {batches_per_epoch} batches')

    def handle_epoch_end(self, record, improved):
        mark = ' *' if improved else ''
        console_logger.info(f'epoch {record.epoch + 1}/{self.epochs} loss={record.train_loss:.6e} '
                            f'val_nrms={record.val_nrms:.6f} lr={record.lr:.3e}{mark}')

    def handle_retry(self, epoch, batch, lr, error):
        console_logger.warning(f'epoch {epoch} batch {batch}: {error}; retrying with lr={lr:.3e}')

    def handle_run_end(self, state):
        if state.best_epoch is not None:
            console_logger.info(f'best validation NRMS {state.best_val_nrms:.6f} at epoch {state.best_epoch + 1}')
