import os
import logging

###################################################################################################
# Utility functions

def save_function(save_fig, save_dir, default_name, fig):

    if save_fig:
        if save_dir == "":
            raise ValueError("Please provide a save directory if you want to save the figure.")
        os.makedirs(save_dir, exist_ok=True)
        fig_path = os.path.join(save_dir, default_name)
        logging.info(f"Saving figure to {fig_path}")
        fig.savefig(fig_path)
    return fig

def clean_field_name(task_name):
    """Axis label of a generation task."""

    names = {"src_ip": "Source IP", "dst_ip": "Destination IP", "src_port": "Source Port",
             "dst_port": "Destination Port", "pkt_len": "Packet Length"}
    return names.get(task_name, task_name.replace("_", " ").title())
