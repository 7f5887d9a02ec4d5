import csv

from polarquant.errors import FormatError, InvalidArgument

CSV_VERSION = 1


class BadMatrice(InvalidArgument):
    pass


def version_line(schema):
    return '# polarquant %s v%i' % (schema, CSV_VERSION)


def ismatrice(mat):
    """test if the matrice mat is a list of rows of numbers or strings
    """
    try:
        iter(mat)
    except TypeError:
        return False
    for row in mat:
        if type(row) != list:
            return False
        for cell in row:
            if not isinstance(cell, (float, int, str)):
                return False
    return True


def writecsv(mat, outfile, header=None, schema=None):
    """write the matrice mat into outfile, optionally preceded by the schema line and a column header
    """
    if not ismatrice(mat):
        raise BadMatrice('The input is not a matrice')
    with open(outfile, 'w', newline='') as f_out:
        if schema:
            f_out.write(version_line(schema) + '\n')
        writer = csv.writer(f_out)
        if header:
            writer.writerow(header)
        writer.writerows(mat)


def write_versioned_csv(outfile, schema, header, mat):
    writecsv(mat, outfile, header=header, schema=schema)


def read_versioned_csv(filename):
    """read a csv written by write_versioned_csv, returns (schema, version, header, rows)
    """
    with open(filename, newline='') as f:
        first = f.readline().rstrip('\r\n')
        tokens = first.split()
        if len(tokens) != 4 or tokens[0] != '#' or tokens[1] != 'polarquant' or not tokens[3].startswith('v'):
            raise FormatError('Missing polarquant schema line in <%s>' % filename)
        schema = tokens[2]
        try:
            version = int(tokens[3][1:])
        except ValueError:
            raise FormatError('Bad schema version <%s> in <%s>' % (tokens[3], filename))
        reader = csv.reader(f)
        data = [line for line in reader]
    if not data:
        raise FormatError('No column header in <%s>' % filename)
    return schema, version, data[0], data[1:]
