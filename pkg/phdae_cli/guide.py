import os

from rich.console import Console


class Guide(object):
    """
    # conditional suggestions

    generate ==> train
    train ==> eval on the test set
    eval ==> bench table1
    """

    def __init__(self):
        self.console = Console(stderr=True)

    def show_tips(self, command_name: str, out_dir: str = None):
        if command_name == 'version':
            return

        out_dir = out_dir or '.'
        if command_name == 'generate':
            train_csv = os.path.join(out_dir, 'train.csv')
            if os.path.exists(train_csv):
                self.show(f"Please execute command 'phdae train --data {out_dir}' to identify a model")
            return

        if command_name == 'train':
            model_json = os.path.join(out_dir, 'model.json')
            if os.path.exists(model_json):
                self.show(f"Please execute command 'phdae eval --model {model_json} --dataset <test.csv>' "
                          f"to measure the test NRMS")
            return

        if command_name == 'eval':
            self.show("Please execute command 'phdae bench table1' to reproduce the noise-level study")
            return

    def show(self, description):
        console = self.console
        console.line()
        console.print("Next step:")
        console.print(f'  {description}')
        console.line()
