from .mseplotter import MSEPlot, MSEPlotter
